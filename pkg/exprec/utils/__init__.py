from .configurations import (
    BUILTIN_MODES,
    ControllerConfiguration,
    CourseConfiguration,
    ExperimentConfiguration,
    ExperimentSchedule,
    GPConfiguration,
    ModeConfiguration,
    RecommenderConfiguration,
    ScheduledRun,
    Segment,
)
from .experience_subscriber import ExperienceSubscriber
from .logging_subscriber import LoggingSubscriber
from .recommender_subscriber import RecommenderSubscriber
from .step_log_subscriber import StepLogSubscriber
