"""Receding-horizon path tracking on the unicycle plus the control GP's disturbance mean.

The command sequence is optimized by Gauss-Newton: at each iteration the rollout is
linearized (GP mean and bounds held at their current values), the box-constrained
linear least-squares step is solved exactly, and a backtracking line search only
accepts steps that lower the true cost. The returned cost therefore never exceeds the
cost of the warm start.

Lateral error is softly constrained to |e| <= e_max - 3 sigma_lat, where sigma_lat is
the one-step position uncertainty of the GP projected on the path normal.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from exprec import gp
from exprec.course import Path
from exprec.experience_store import build_feature
from exprec.utils.configurations import ControllerConfiguration
from exprec.vehicle import Command, VehicleState, unicycle, wrap_angle

logger = logging.getLogger(__name__)

_LINE_SEARCH = (1.0, 0.5, 0.25, 0.125)


@dataclass(frozen=True)
class TrackingError:
    lateral: float  # m, positive to the left of the path
    heading: float  # rad


def nearest_vertex(path: Path, xy: np.ndarray) -> int:
    d2 = np.sum((path.xy - xy) ** 2, axis=1)
    # argmin returns the first minimum, so ties go to the lower index
    return int(np.argmin(d2))


def tracking_error(path: Path, vertex: int, state: np.ndarray) -> TrackingError:
    theta_v = path.theta[vertex]
    offset = state[:2] - path.xy[vertex]
    lateral = -np.sin(theta_v) * offset[0] + np.cos(theta_v) * offset[1]
    return TrackingError(float(lateral), float(wrap_angle(state[2] - theta_v)))


def localize(state: VehicleState | np.ndarray, path: Path) -> tuple[int, TrackingError]:
    """Nearest path vertex and the signed tracking error against it."""
    x = state.array if isinstance(state, VehicleState) else np.asarray(state, dtype=np.float64)
    vertex = nearest_vertex(path, x[:2])
    return vertex, tracking_error(path, vertex, x)


@dataclass(frozen=True, eq=False)
class Rollout:
    states: np.ndarray  # (H+1, 3)
    features: np.ndarray  # (H, d_a)
    means: np.ndarray  # (H, 3) GP disturbance mean
    variances: np.ndarray  # (H, 3) GP predictive variance
    vertices: np.ndarray  # (H+1,)
    lateral: np.ndarray  # (H+1,)
    heading: np.ndarray  # (H+1,)

    @property
    def predictions(self) -> list[list[gp.Prediction]]:
        """Per-step, per-dimension predictions along the horizon."""
        return [[gp.Prediction(m, v) for m, v in zip(mu, var)] for mu, var in zip(self.means, self.variances)]


def predict_rollout(state: np.ndarray, commands: np.ndarray, model: gp.GPModel, path: Path, dt: float) -> Rollout:
    """Propagate x_{k+1} = f(x_k, u_k) + dt * mu(a_k) and record the GP prediction per step."""
    commands = np.asarray(commands, dtype=np.float64).reshape(-1, 2)
    horizon = commands.shape[0]
    states = np.empty((horizon + 1, 3))
    features = np.empty((horizon, 3))
    means = np.empty((horizon, 3))
    variances = np.empty((horizon, 3))
    vertices = np.empty(horizon + 1, dtype=int)
    lateral = np.empty(horizon + 1)
    heading = np.empty(horizon + 1)

    states[0] = state
    for k in range(horizon + 1):
        vertices[k] = nearest_vertex(path, states[k, :2])
        err = tracking_error(path, vertices[k], states[k])
        lateral[k], heading[k] = err.lateral, err.heading
        if k == horizon:
            break
        features[k] = build_feature(commands[k, 0], commands[k, 1], path.curvature[vertices[k]])
        for dim, p in enumerate(gp.predict(model, features[k])):
            means[k, dim] = p.mean
            variances[k, dim] = p.variance
        states[k + 1] = unicycle(states[k], commands[k], dt) + dt * means[k]
    return Rollout(states, features, means, variances, vertices, lateral, heading)


@dataclass(frozen=True, eq=False)
class MPCSolution:
    command: Command
    sequence: np.ndarray  # (H, 2)
    cost: float
    warm_cost: float
    iterations: int
    fault: bool
    safety_flag: bool
    rollout: Rollout | None


def stage_cost(error: TrackingError, cmd: Command, previous: Command, config: ControllerConfiguration) -> float:
    """Quadratic stage cost of one realized state/command pair."""
    return float(
        config.lateral_weight * error.lateral**2
        + config.heading_weight * error.heading**2
        + config.turn_rate_weight * cmd.omega_cmd**2
        + config.speed_error_weight * (cmd.v_cmd - config.v_desired) ** 2
        + config.turn_rate_change_weight * (cmd.omega_cmd - previous.omega_cmd) ** 2
        + config.speed_change_weight * (cmd.v_cmd - previous.v_cmd) ** 2
    )


def lateral_bounds(rollout: Rollout, path: Path, config: ControllerConfiguration) -> np.ndarray:
    """Tightened lateral bound e_max - 3 sigma_lat for states 1..H (may be negative when infeasible)."""
    theta_v = path.theta[rollout.vertices[1:]]
    normal = np.stack([-np.sin(theta_v), np.cos(theta_v)], axis=1)
    sigma_xy = np.sqrt(rollout.variances[:, :2])
    sigma_lat = config.dt * np.sqrt(np.sum((normal * sigma_xy) ** 2, axis=1))
    return config.lateral_bound - 3.0 * sigma_lat


class _Problem:
    """Residuals and their Gauss-Newton Jacobian for one solve."""

    def __init__(self, state: np.ndarray, path: Path, model: gp.GPModel, previous: np.ndarray, config: ControllerConfiguration):
        self.state = state
        self.path = path
        self.model = model
        self.previous = previous
        self.config = config
        h = config.horizon_steps
        self.lower = np.tile([0.0, -config.omega_max], h)
        self.upper = np.tile([config.v_max, config.omega_max], h)
        c = config
        self.sqrt_w = np.sqrt(
            [c.lateral_weight, c.heading_weight, c.turn_rate_weight, c.speed_error_weight,
             c.turn_rate_change_weight, c.speed_change_weight, c.constraint_weight]
        )

    def evaluate(self, u_flat: np.ndarray) -> tuple[Rollout, np.ndarray, np.ndarray]:
        u = u_flat.reshape(-1, 2)
        rollout = predict_rollout(self.state, u, self.model, self.path, self.config.dt)
        bounds = lateral_bounds(rollout, self.path, self.config)
        lat = rollout.lateral[1:]
        violation = np.maximum(np.abs(lat) - np.maximum(bounds, 0.0), 0.0)
        du = np.diff(np.vstack([self.previous, u]), axis=0)
        w = self.sqrt_w
        residuals = np.concatenate([
            w[0] * lat,
            w[1] * rollout.heading[1:],
            w[2] * u[:, 1],
            w[3] * (u[:, 0] - self.config.v_desired),
            w[4] * du[:, 1],
            w[5] * du[:, 0],
            w[6] * violation,
        ])
        return rollout, residuals, bounds

    def jacobian(self, rollout: Rollout, u_flat: np.ndarray, bounds: np.ndarray) -> np.ndarray:
        u = u_flat.reshape(-1, 2)
        h = u.shape[0]
        dt = self.config.dt
        n = 2 * h
        sens = np.zeros((3, n))
        lat_rows = np.zeros((h, n))
        head_rows = np.zeros((h, n))
        for k in range(h):
            theta = rollout.states[k, 2]
            v = u[k, 0]
            a = np.array([[1.0, 0.0, -dt * v * np.sin(theta)], [0.0, 1.0, dt * v * np.cos(theta)], [0.0, 0.0, 1.0]])
            sens = a @ sens
            sens[:, 2 * k] += [dt * np.cos(theta), dt * np.sin(theta), 0.0]
            sens[2, 2 * k + 1] += dt
            theta_v = self.path.theta[rollout.vertices[k + 1]]
            lat_rows[k] = -np.sin(theta_v) * sens[0] + np.cos(theta_v) * sens[1]
            head_rows[k] = sens[2]

        eye = np.eye(n)
        v_rows = eye[0::2]
        omega_rows = eye[1::2]
        dv_rows = v_rows - np.vstack([np.zeros(n), v_rows[:-1]])
        domega_rows = omega_rows - np.vstack([np.zeros(n), omega_rows[:-1]])
        lat = rollout.lateral[1:]
        active = (np.abs(lat) > np.maximum(bounds, 0.0))[:, None]
        con_rows = np.where(active, np.sign(lat)[:, None] * lat_rows, 0.0)
        w = self.sqrt_w
        return np.vstack([
            w[0] * lat_rows,
            w[1] * head_rows,
            w[2] * omega_rows,
            w[3] * v_rows,
            w[4] * domega_rows,
            w[5] * dv_rows,
            w[6] * con_rows,
        ])


def solve(
    state: VehicleState | np.ndarray,
    path: Path,
    model: gp.GPModel,
    config: ControllerConfiguration,
    previous: Command | None = None,
    warm_start: np.ndarray | None = None,
) -> MPCSolution:
    """Optimize the command sequence and return its first command.

    Args:
        previous: the command applied before this solve; defaults to (v_desired, 0).
        warm_start: (H, 2) initial sequence; defaults to repeating `previous`.
    """
    x = state.array if isinstance(state, VehicleState) else np.asarray(state, dtype=np.float64)
    previous = previous if previous is not None else Command(config.v_desired, 0.0)
    prev = previous.array
    if warm_start is None:
        warm_start = np.tile(prev, (config.horizon_steps, 1))
    problem = _Problem(x, path, model, prev, config)
    u = np.clip(np.asarray(warm_start, dtype=np.float64).reshape(-1), problem.lower, problem.upper)

    rollout, residuals, bounds = problem.evaluate(u)
    cost = warm_cost = float(residuals @ residuals)
    if not np.isfinite(cost):
        return _fault(previous, config, "non-finite warm-start cost")

    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        jac = problem.jacobian(rollout, u, bounds)
        try:
            step = lsq_linear(jac, -residuals, bounds=(problem.lower - u, problem.upper - u), method="bvls").x
        except (ValueError, np.linalg.LinAlgError) as e:
            return _fault(previous, config, f"linear subproblem failed: {e}")
        if not np.all(np.isfinite(step)):
            return _fault(previous, config, "non-finite Gauss-Newton step")

        improved = False
        for scale in _LINE_SEARCH:
            candidate = np.clip(u + scale * step, problem.lower, problem.upper)
            c_rollout, c_residuals, c_bounds = problem.evaluate(candidate)
            c_cost = float(c_residuals @ c_residuals)
            if np.isfinite(c_cost) and c_cost < cost:
                improved = True
                break
        if not improved:
            break
        gain = cost - c_cost
        u, rollout, residuals, bounds, cost = candidate, c_rollout, c_residuals, c_bounds, c_cost
        if gain <= 1e-9 * max(cost, 1.0):
            break

    lat = rollout.lateral[1:]
    safety_flag = bool(np.any(bounds <= 0.0) or np.any(np.abs(lat) > np.maximum(bounds, 0.0)))
    if safety_flag:
        logger.warning(f"Lateral constraint tightening infeasible or violated (max |e|={np.max(np.abs(lat)):.3f} m)")
    sequence = u.reshape(-1, 2)
    return MPCSolution(
        command=Command.from_array(sequence[0]),
        sequence=sequence,
        cost=cost,
        warm_cost=warm_cost,
        iterations=iterations,
        fault=False,
        safety_flag=safety_flag,
        rollout=rollout,
    )


def _fault(previous: Command, config: ControllerConfiguration, reason: str) -> MPCSolution:
    logger.error(f"Controller fault: {reason}")
    command = Command(previous.v_cmd * config.fault_decay, previous.omega_cmd * config.fault_decay)
    sequence = np.tile(command.array, (config.horizon_steps, 1))
    return MPCSolution(command, sequence, float("nan"), float("nan"), 0, True, False, None)


class PathTrackingMPC:
    """Stateful wrapper: remembers the last applied command and shifts the previous plan as warm start."""

    def __init__(self, path: Path, config: ControllerConfiguration):
        self.path = path
        self.config = config
        self.reset()

    def reset(self) -> None:
        self.previous = Command(self.config.v_desired, 0.0)
        self._plan: np.ndarray | None = None

    def compute(self, state: VehicleState, model: gp.GPModel) -> MPCSolution:
        warm = None
        if self._plan is not None:
            warm = np.vstack([self._plan[1:], self._plan[-1:]])
        solution = solve(state, self.path, model, self.config, self.previous, warm)
        self._plan = None if solution.fault else solution.sequence
        self.previous = solution.command
        return solution
