import abc
from typing import TYPE_CHECKING, TypedDict

if TYPE_CHECKING:
    from exprec.runtime.agent import Action
    from exprec.vehicle import VehicleState


class Observation(TypedDict):
    """What the controller and the loggers see of the vehicle after localization."""

    t: float
    step: int
    state: "VehicleState"
    # Nearest path vertex and the tracking error relative to it
    vertex: int
    lateral: float
    heading: float
    curvature: float


class Environment(abc.ABC):
    """The vehicle on its course, one run per episode."""

    @abc.abstractmethod
    def reset(self) -> None:
        """Put the vehicle back at the start of the course before a run."""

    @abc.abstractmethod
    def is_episode_complete(self) -> bool:
        """True once the lap is finished or the run was aborted."""

    @abc.abstractmethod
    def get_observation(self) -> Observation: ...

    @abc.abstractmethod
    def apply_action(self, action: "Action") -> None:
        """Integrate the plant over one control period under the action's command."""
