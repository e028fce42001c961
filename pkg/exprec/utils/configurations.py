import logging
import math
from dataclasses import dataclass, field

from exprec.gp import Hyperparameters

METHODS = ("proposed", "last_run", "prior_only")


@dataclass
class ModeConfiguration:
    """An operating condition of the simulated vehicle."""

    name: str
    turn_gain: float = 1.0
    lateral_slip_gain: float = 0.0
    drag_gain: float = 0.0
    # Standard deviation of the additive disturbance noise for (g_x, g_y, g_theta)
    noise_std: list[float] = field(default_factory=lambda: [0.02, 0.02, 0.03])

    def __post_init__(self):
        if len(self.noise_std) != 3 or any(s < 0 for s in self.noise_std):
            raise ValueError(f"Mode `{self.name}` needs three non-negative noise std values, got {self.noise_std}")


# Loaded gains are a modelling choice: measurably different from nominal, but closer to it than altered.
BUILTIN_MODES = {
    "nominal": ModeConfiguration("nominal", 1.0, 0.0, 0.0),
    "loaded": ModeConfiguration("loaded", 1.15, 0.05, 0.02),
    "altered": ModeConfiguration("altered", 0.7, 0.0, 0.0),
}


@dataclass
class Segment:
    type: str = "straight"
    length: float | None = None
    radius: float | None = None
    # Signed turn angle in rad, positive turns left
    angle: float | None = None


BENCHMARK_RADIUS = 2.0
BENCHMARK_STRAIGHT = 14.74


def _benchmark_segments() -> list[Segment]:
    # Two straights joined by two semicircles built from quarter arcs, about 42 m in total.
    # The corner turn rate at v_desired must keep the altered heading offset clearly above 3 sigma of the GP noise
    def corner():
        return Segment("arc", radius=BENCHMARK_RADIUS, angle=math.pi / 2)

    def straight():
        return Segment("straight", length=BENCHMARK_STRAIGHT)

    return [straight(), corner(), corner(), straight(), corner(), corner()]


@dataclass
class CourseConfiguration:
    segments: list[Segment] = field(default_factory=_benchmark_segments)
    spacing: float = 0.15
    closed: bool = True
    start: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError(f"Vertex spacing must be positive, got {self.spacing}")
        if len(self.start) != 3:
            raise ValueError(f"Start pose must be [x, y, theta], got {self.start}")


@dataclass
class GPConfiguration:
    """Hyperparameters of the disturbance GPs, one entry per output dimension (g_x, g_y, g_theta)."""

    signal_std: list[float] = field(default_factory=lambda: [0.3, 0.3, 0.3])
    noise_std: list[float] = field(default_factory=lambda: [0.05, 0.05, 0.05])
    # Feature units: v_cmd [m/s], omega_cmd [rad/s], curvature [1/m]
    length_scales: list[list[float]] = field(default_factory=lambda: [[1.0, 0.5, 0.5] for _ in range(3)])

    def __post_init__(self):
        for name in ("signal_std", "noise_std", "length_scales"):
            if len(getattr(self, name)) != 3:
                raise ValueError(f"gp.{name} needs one entry per disturbance dimension, got {getattr(self, name)}")
        # Hyperparameters validates the values
        self.hyperparameters()

    def hyperparameters(self) -> tuple[Hyperparameters, Hyperparameters, Hyperparameters]:
        return tuple(
            Hyperparameters(scales, signal**2, noise**2)
            for scales, signal, noise in zip(self.length_scales, self.signal_std, self.noise_std)
        )


@dataclass
class RecommenderConfiguration:
    alpha: float = 0.05
    # Two-sided 3 sigma mass of a Gaussian
    outlier_probability: float = 0.0027
    n_add: int = 10
    n_control: int = 50
    n_drop: int = 10
    live_window_s: float = 3.0
    min_live_samples: int = 10
    max_candidates: int = 300
    ahead_vertices: int = 15
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0 < self.outlier_probability < 1:
            raise ValueError(f"outlier_probability must be in (0, 1), got {self.outlier_probability}")
        if min(self.n_add, self.n_control, self.n_drop) < 0:
            raise ValueError("Experience counts must be non-negative")
        if self.live_window_s <= 0 or self.ahead_vertices < 1 or self.max_candidates < 1:
            raise ValueError("Window sizes and candidate cap must be positive")


@dataclass
class ControllerConfiguration:
    horizon_steps: int = 15
    dt: float = 0.1
    lateral_weight: float = 500.0
    heading_weight: float = 35.0
    turn_rate_weight: float = 5.0
    speed_error_weight: float = 4.0
    turn_rate_change_weight: float = 1000.0
    speed_change_weight: float = 500.0
    v_desired: float = 1.5
    lateral_bound: float = 0.5
    v_max: float = 2.0
    omega_max: float = 1.5
    max_iterations: int = 5
    constraint_weight: float = 1e4
    # Applied to the previous command when the solver faults
    fault_decay: float = 0.5

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ValueError(f"Horizon must be at least one step, got {self.horizon_steps}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        weights = (
            self.lateral_weight,
            self.heading_weight,
            self.turn_rate_weight,
            self.speed_error_weight,
            self.turn_rate_change_weight,
            self.speed_change_weight,
            self.constraint_weight,
        )
        if any(w < 0 for w in weights):
            raise ValueError("Cost weights must be non-negative")
        if self.v_max <= 0 or self.omega_max <= 0 or self.lateral_bound <= 0:
            raise ValueError("Input and lateral bounds must be positive")


@dataclass
class ScheduledRun:
    index: int
    mode: str
    # Optional mid-run condition switch for stress tests
    switch_at_vertex: int | None = None
    switch_to: str | None = None


@dataclass
class ExperimentSchedule:
    runs: list[ScheduledRun] = field(default_factory=list)
    method: str = "proposed"
    seed: int = 0
    course: CourseConfiguration = field(default_factory=CourseConfiguration)
    # Extra modes on top of the built-in ones
    modes: list[ModeConfiguration] = field(default_factory=list)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"Unrecognized method `{self.method}`, expected one of {METHODS}")
        for expected, run in enumerate(self.runs, start=1):
            if run.index != expected:
                raise ValueError(f"Run indices must be contiguous from 1, got {run.index} at position {expected}")
            for name in (run.mode, run.switch_to):
                if name is not None and name not in self.mode_table:
                    raise ValueError(f"Run {run.index} references unknown mode `{name}`")
            if (run.switch_at_vertex is None) != (run.switch_to is None):
                raise ValueError(f"Run {run.index}: switch_at_vertex and switch_to go together")

    @property
    def mode_table(self) -> dict[str, ModeConfiguration]:
        return {**BUILTIN_MODES, **{m.name: m for m in self.modes}}


@dataclass
class ExperimentConfiguration:
    schedule: ExperimentSchedule = field(default_factory=ExperimentSchedule)
    gp: GPConfiguration = field(default_factory=GPConfiguration)
    recommender: RecommenderConfiguration = field(default_factory=RecommenderConfiguration)
    controller: ControllerConfiguration = field(default_factory=ControllerConfiguration)
    # Abort a run whose lateral error exceeds this many metres
    divergence_limit: float = 2.0
    # Abort a run that takes longer than this multiple of the nominal lap time
    max_lap_factor: float = 3.0
    log_level: str = "INFO"

    @property
    def logger(self) -> logging.Logger:
        logger = logging.getLogger("exprec")
        logger.setLevel(self.log_level)
        return logger
