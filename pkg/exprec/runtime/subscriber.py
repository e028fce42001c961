import abc

from exprec.runtime.agent import Action
from exprec.runtime.environment import Observation


class Subscriber(abc.ABC):
    """Receives every transition of a run: experience recording, recommendation and logs hang off this."""

    @abc.abstractmethod
    def on_episode_start(self) -> None: ...

    @abc.abstractmethod
    def on_step(self, observation: Observation, action: Action, next_observation: Observation) -> None:
        """`next_observation` is the vehicle one control period after `action` was applied."""

    @abc.abstractmethod
    def on_episode_end(self) -> None: ...
