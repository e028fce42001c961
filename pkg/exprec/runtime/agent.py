import abc
from typing import TYPE_CHECKING, TypedDict

from exprec.runtime.environment import Observation

if TYPE_CHECKING:
    from exprec import gp
    from exprec.controller import MPCSolution
    from exprec.vehicle import Command


class Action(TypedDict, total=False):
    command: "Command"
    solution: "MPCSolution"
    stage_cost: float
    # Per-dimension GP prediction at the applied command, None after a fault
    applied_prediction: "list[gp.Prediction] | None"
    control_size: int
    control_generation: int


class Agent(abc.ABC):
    """Chooses the command to apply from the latest observation."""

    @abc.abstractmethod
    def get_action(self, observation: Observation) -> Action:
        """Only `command` and `solution` are required; loggers read the rest when present."""

    @abc.abstractmethod
    def reset(self) -> None:
        """Forget warm starts and previous commands before a new run."""
