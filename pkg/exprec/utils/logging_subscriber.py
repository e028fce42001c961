from logging import Logger

from typing_extensions import override

from exprec.runtime.agent import Action
from exprec.runtime.environment import Observation
from exprec.runtime.subscriber import Subscriber


class LoggingSubscriber(Subscriber):
    def __init__(self, logger: Logger, run_index: int):
        self.logger = logger
        self.run_index = run_index
        self._cost = 0.0
        self._steps = 0

    @override
    def on_episode_start(self) -> None:
        self._cost = 0.0
        self._steps = 0
        self.logger.info(f"Run {self.run_index} started")

    @override
    def on_step(self, observation: Observation, action: Action, next_observation: Observation) -> None:
        self._cost += action["stage_cost"]
        self._steps += 1
        cmd = action["command"]
        self.logger.debug(
            f"t={observation['t']:.1f} vertex={observation['vertex']} lat={observation['lateral']:+.3f} "
            f"cmd=({cmd.v_cmd:.3f}, {cmd.omega_cmd:+.3f}) cost={action['stage_cost']:.2f} gp={action['control_size']}"
        )

    @override
    def on_episode_end(self) -> None:
        self.logger.info(f"Run {self.run_index} ended after {self._steps} steps, cumulative cost {self._cost:.1f}")
