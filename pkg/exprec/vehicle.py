"""Ground-truth plant: unicycle kinematics plus a mode-specific disturbance."""

from dataclasses import dataclass

import numpy as np

from exprec.utils.configurations import ModeConfiguration


def wrap_angle(theta):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    return np.pi - np.mod(np.pi - theta, 2 * np.pi)


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.theta])):
            raise ValueError(f"Vehicle state must be finite, got {self}")
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class Command:
    v_cmd: float
    omega_cmd: float

    @property
    def array(self) -> np.ndarray:
        return np.array([self.v_cmd, self.omega_cmd])

    @classmethod
    def from_array(cls, arr) -> "Command":
        return cls(float(arr[0]), float(arr[1]))

    def clipped(self, v_max: float, omega_max: float) -> "Command":
        return Command(float(np.clip(self.v_cmd, -v_max, v_max)), float(np.clip(self.omega_cmd, -omega_max, omega_max)))


def unicycle(state: np.ndarray, cmd: np.ndarray, dt: float) -> np.ndarray:
    """Nominal model f(x, u): one Euler step of the unicycle, heading left unwrapped."""
    x, y, theta = state
    v, omega = cmd
    return np.array([x + dt * np.cos(theta) * v, y + dt * np.sin(theta) * v, theta + dt * omega])


def disturbance_mean(mode: ModeConfiguration, state: np.ndarray, cmd: np.ndarray) -> np.ndarray:
    """Deterministic part g_0 of the disturbance for a mode."""
    theta = state[2]
    v, omega = cmd
    normal = np.array([-np.sin(theta), np.cos(theta)])
    backward = np.array([-np.cos(theta), -np.sin(theta)])
    g_xy = mode.lateral_slip_gain * omega * v * normal + mode.drag_gain * v * backward
    g_theta = (mode.turn_gain - 1.0) * omega
    return np.array([g_xy[0], g_xy[1], g_theta])


def disturbance(
    mode: ModeConfiguration, state: np.ndarray, cmd: np.ndarray, rng: np.random.Generator | None = None
) -> np.ndarray:
    """g_0 plus a Gaussian noise sample. With no rng the noise-free mean is returned."""
    g = disturbance_mean(mode, state, cmd)
    if rng is not None:
        g = g + rng.normal(0.0, 1.0, size=3) * np.asarray(mode.noise_std)
    return g


def step(
    state: VehicleState,
    cmd: Command,
    mode: ModeConfiguration,
    dt: float,
    rng: np.random.Generator | None = None,
) -> VehicleState:
    """Advance the plant one control period under the mode's true disturbance."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = state.array
    u = cmd.array
    g = disturbance(mode, x, u, rng)
    nxt = unicycle(x, u, dt) + dt * g
    return VehicleState(float(nxt[0]), float(nxt[1]), float(wrap_angle(nxt[2])))
