import csv
from pathlib import Path as FilePath

import numpy as np
from typing_extensions import override

from exprec.runtime.agent import Action
from exprec.runtime.environment import Observation
from exprec.runtime.subscriber import Subscriber
from exprec.vehicle import wrap_angle

STEP_COLUMNS = (
    "step", "t", "x", "y", "theta", "vertex", "lateral", "heading", "v_cmd", "omega_cmd", "stage_cost",
    "mu_x", "mu_y", "mu_theta", "sigma_x", "sigma_y", "sigma_theta", "theta_rate", "control_size", "safety_flag",
)


class StepLogSubscriber(Subscriber):
    """Keeps the per-step record of a run for metrics and writes it as steps.csv."""

    def __init__(self, dt: float, out_dir: str | FilePath | None = None):
        self.dt = dt
        self.out_dir = FilePath(out_dir) if out_dir is not None else None
        self.rows: list[list] = []
        # Predicted rotational rate (mean, std) over the horizon, one row per step
        self.predicted_rate_mean: list[np.ndarray] = []
        self.predicted_rate_std: list[np.ndarray] = []
        self.realized_rate: list[float] = []

    @override
    def on_episode_start(self) -> None:
        self.rows = []
        self.predicted_rate_mean = []
        self.predicted_rate_std = []
        self.realized_rate = []

    @override
    def on_step(self, observation: Observation, action: Action, next_observation: Observation) -> None:
        state = observation["state"]
        cmd = action["command"]
        solution = action["solution"]
        rate = float(wrap_angle(next_observation["state"].theta - state.theta)) / self.dt
        self.realized_rate.append(rate)

        if solution.rollout is not None:
            rollout = solution.rollout
            self.predicted_rate_mean.append(solution.sequence[:, 1] + rollout.means[:, 2])
            self.predicted_rate_std.append(np.sqrt(rollout.variances[:, 2]))
        else:
            self.predicted_rate_mean.append(np.full(solution.sequence.shape[0], np.nan))
            self.predicted_rate_std.append(np.full(solution.sequence.shape[0], np.nan))

        applied = action["applied_prediction"]
        mu = [p.mean for p in applied] if applied else [float("nan")] * 3
        sigma = [p.std for p in applied] if applied else [float("nan")] * 3
        self.rows.append([
            observation["step"], observation["t"], state.x, state.y, state.theta, observation["vertex"],
            observation["lateral"], observation["heading"], cmd.v_cmd, cmd.omega_cmd, action["stage_cost"],
            *mu, *sigma, rate, action["control_size"], int(solution.safety_flag),
        ])

    @property
    def stage_costs(self) -> np.ndarray:
        return np.array([r[10] for r in self.rows])

    @property
    def lateral(self) -> np.ndarray:
        return np.array([r[6] for r in self.rows])

    @property
    def safety_flags(self) -> int:
        return sum(r[-1] for r in self.rows)

    @override
    def on_episode_end(self) -> None:
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.out_dir / "steps.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(STEP_COLUMNS)
            for row in self.rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
