import logging

import numpy as np
from typing_extensions import override

from exprec import vehicle
from exprec.controller import localize
from exprec.course import Path
from exprec.runtime.agent import Action
from exprec.runtime.environment import Environment, Observation
from exprec.utils.configurations import ModeConfiguration
from exprec.vehicle import VehicleState


class VehicleEnvironment(Environment):
    """Simulated vehicle driving one lap of the course under a (hidden) operating mode.

    The episode ends when the lap is complete or the run has to be aborted; `status`
    says which.
    """

    def __init__(
        self,
        path: Path,
        mode: ModeConfiguration,
        dt: float,
        rng: np.random.Generator,
        divergence_limit: float = 2.0,
        max_steps: int = 0,
        switch: tuple[int, ModeConfiguration] | None = None,
        logger: logging.Logger = logging.getLogger(__name__),
    ):
        self.path = path
        self._initial_mode = mode
        self.dt = dt
        self._rng = rng
        self.divergence_limit = divergence_limit
        self.max_steps = max_steps
        self._switch = switch
        self.logger = logger
        self.reset()

    @override
    def reset(self) -> None:
        self.mode = self._initial_mode
        self.state = VehicleState(float(self.path.xy[0, 0]), float(self.path.xy[0, 1]), float(self.path.theta[0]))
        self.t = 0.0
        self.steps = 0
        self.progress = 0
        self.status = "running"
        self._vertex, self._error = localize(self.state, self.path)

    @override
    def is_episode_complete(self) -> bool:
        return self.status != "running"

    @override
    def get_observation(self) -> Observation:
        return {
            "t": self.t,
            "step": self.steps,
            "state": self.state,
            "vertex": self._vertex,
            "lateral": self._error.lateral,
            "heading": self._error.heading,
            "curvature": float(self.path.curvature[self._vertex]),
        }

    @override
    def apply_action(self, action: Action) -> None:
        if action["solution"].fault:
            self.status = "fault"
            self.logger.warning(f"Aborting run at t={self.t:.1f}s: controller fault")
        try:
            self.state = vehicle.step(self.state, action["command"], self.mode, self.dt, self._rng)
        except ValueError as e:
            self.status = "fault"
            self.logger.error(f"Aborting run at t={self.t:.1f}s: {e}")
            return
        self.t = round(self.t + self.dt, 9)
        self.steps += 1

        previous = self._vertex
        self._vertex, self._error = localize(self.state, self.path)
        self.progress += self.path.advance(previous, self._vertex)

        if self._switch is not None and self.progress >= self._switch[0] and self.mode is not self._switch[1]:
            self.logger.info(f"Switching operating mode to `{self._switch[1].name}` at vertex {self._vertex}")
            self.mode = self._switch[1]

        if self.status != "running":
            return
        if abs(self._error.lateral) > self.divergence_limit:
            self.status = "diverged"
            self.logger.warning(f"Aborting run at t={self.t:.1f}s: lateral error {self._error.lateral:.2f} m")
        elif self.progress >= self.path.n_vertices - 1:
            self.status = "complete"
        elif self.max_steps and self.steps >= self.max_steps:
            self.status = "timeout"
            self.logger.warning(f"Aborting run: lap not completed within {self.max_steps} steps")
