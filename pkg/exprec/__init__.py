from .utils import (
    ControllerConfiguration,
    CourseConfiguration,
    ExperimentConfiguration,
    ExperimentSchedule,
    GPConfiguration,
    ModeConfiguration,
    RecommenderConfiguration,
)
from .vehicle_environment import VehicleEnvironment
