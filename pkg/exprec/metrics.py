"""Prediction-quality and recommendation metrics.

M-RMSE and M-RMSZ compare the rotational rate predicted over the MPC horizon at step k
with the rate the vehicle actually showed at steps k..k+p-1; a run is summarized by
the mean over all start steps k with a full horizon of realized data.
"""

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

NONE_COLUMN = "none"


def _window(values, horizon: int, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if horizon < 1 or values.size < horizon:
        raise ValueError(f"{name} needs at least {horizon} entries, got {values.size}")
    return values[:horizon]


def m_rmse(predicted_mean: Sequence[float], realized: Sequence[float], horizon: int) -> float:
    """RMS error of a horizon-long prediction."""
    mu = _window(predicted_mean, horizon, "predicted_mean")
    true = _window(realized, horizon, "realized")
    return float(np.sqrt(np.mean((true - mu) ** 2)))


def m_rmsz(predicted_mean: Sequence[float], predicted_std: Sequence[float], realized: Sequence[float], horizon: int) -> float:
    """RMS z-score of a horizon-long prediction. Around one is well calibrated."""
    mu = _window(predicted_mean, horizon, "predicted_mean")
    sigma = _window(predicted_std, horizon, "predicted_std")
    true = _window(realized, horizon, "realized")
    if np.any(sigma <= 0):
        raise ValueError("Predicted standard deviation must be positive")
    return float(np.sqrt(np.mean(((true - mu) / sigma) ** 2)))


def run_prediction_metrics(
    predicted_mean: Sequence[np.ndarray], predicted_std: Sequence[np.ndarray], realized: Sequence[float]
) -> tuple[float, float]:
    """Mean M-RMSE and M-RMSZ over every step whose horizon lies inside the run.

    Steps without a prediction (NaN, e.g. after a controller fault) are skipped.
    """
    realized = np.asarray(realized, dtype=np.float64)
    errors, zscores = [], []
    for k, (mu, sigma) in enumerate(zip(predicted_mean, predicted_std)):
        horizon = len(mu)
        if k + horizon > realized.size:
            break
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            continue
        errors.append(m_rmse(mu, realized[k:], horizon))
        zscores.append(m_rmsz(mu, sigma, realized[k:], horizon))
    if not errors:
        return float("nan"), float("nan")
    return float(np.mean(errors)), float(np.mean(zscores))


@dataclass(frozen=True)
class RecommendationRecord:
    """One recommender decision, joined with where it happened."""

    live_run: int
    vertex: int
    curvature: float
    chosen_run: int | None


def source_histogram(chosen: Iterable[int | None], labels: Mapping[int, str]) -> dict[str, float]:
    """Fraction of decisions drawing from each ground-truth mode, plus `none`."""
    chosen = list(chosen)
    columns = sorted(set(labels.values())) + [NONE_COLUMN]
    counts = dict.fromkeys(columns, 0)
    for run in chosen:
        counts[NONE_COLUMN if run is None else labels[run]] += 1
    if not chosen:
        return {c: (1.0 if c == NONE_COLUMN else 0.0) for c in columns}
    return {c: counts[c] / len(chosen) for c in columns}


def confusion_matrix(
    records: Iterable[RecommendationRecord], labels: Mapping[int, str], corner_curvature: float | None = None
) -> dict[str, dict[str, float]]:
    """Per live-run mode, the distribution of recommendation sources by mode.

    With `corner_curvature` set, only decisions at vertices with |curvature| > `corner_curvature` are counted.
    """
    by_mode: dict[str, list[int | None]] = {}
    for r in records:
        if corner_curvature is not None and abs(r.curvature) <= corner_curvature:
            continue
        by_mode.setdefault(labels[r.live_run], []).append(r.chosen_run)
    return {mode: source_histogram(chosen, labels) for mode, chosen in sorted(by_mode.items())}


def none_fraction_trend(modes: Sequence[str], none_fractions: Sequence[float]) -> list[float]:
    """Median none-recommended fraction by exposure.

    Entry e is the median over runs that had exactly e earlier runs in the same mode, so a
    recommender that learns to find relevant experience shows a decreasing sequence.
    """
    seen: dict[str, int] = {}
    by_exposure: dict[int, list[float]] = {}
    for mode, fraction in zip(modes, none_fractions):
        exposure = seen.get(mode, 0)
        seen[mode] = exposure + 1
        by_exposure.setdefault(exposure, []).append(fraction)
    return [float(np.median(by_exposure[e])) for e in sorted(by_exposure)]


@dataclass
class RunMetrics:
    index: int
    mode: str
    status: str
    steps: int
    m_rmse: float
    m_rmsz: float
    cumulative_cost: float
    average_speed: float
    max_abs_lateral: float
    none_fraction: float
    sources: dict[str, float] = field(default_factory=dict)
    safety_flags: int = 0
    recommender_time_s: float = 0.0

    @property
    def failed(self) -> bool:
        return self.status != "complete"
