from typing_extensions import override

from exprec import gp
from exprec.controller import PathTrackingMPC, TrackingError, stage_cost
from exprec.recommender import ControlGPChannel
from exprec.runtime import agent as _agent
from exprec.runtime.agent import Action
from exprec.runtime.environment import Observation


class MPCAgent(_agent.Agent):
    """An agent that tracks the path with MPC on the latest published control GP."""

    def __init__(self, controller: PathTrackingMPC, channel: ControlGPChannel) -> None:
        self._controller = controller
        self._channel = channel

    @override
    def get_action(self, observation: Observation) -> Action:
        # Never blocks on the recommender: whatever set was published last is used as-is
        published = self._channel.latest()
        previous = self._controller.previous
        solution = self._controller.compute(observation["state"], published.model)
        error = TrackingError(observation["lateral"], observation["heading"])
        # GP prediction at the feature the applied command actually produces
        if solution.rollout is not None:
            applied = [gp.Prediction(m, v) for m, v in zip(solution.rollout.means[0], solution.rollout.variances[0])]
        else:
            applied = None
        return {
            "command": solution.command,
            "solution": solution,
            "stage_cost": stage_cost(error, solution.command, previous, self._controller.config),
            "applied_prediction": applied,
            "control_size": len(published.control_set),
            "control_generation": published.control_set.generation,
        }

    @override
    def reset(self) -> None:
        self._controller.reset()
