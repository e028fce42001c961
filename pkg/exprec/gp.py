"""Local Gaussian-process regression with the squared-exponential kernel.

One independent GP is kept per output dimension, all sharing the same input set.
Dimensions whose hyperparameters are identical also share one Cholesky factor.

Predictions are always the predictive distribution of a *noisy observation*,
i.e. the latent posterior variance plus the observation noise variance.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.stats import norm

logger = logging.getLogger(__name__)

# Jitter escalation, in units of the signal variance.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-6


class GPFitError(RuntimeError):
    """Raised when the covariance matrix cannot be factorized even with jitter."""


@dataclass(frozen=True, eq=False)
class Hyperparameters:
    length_scales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        scales = np.asarray(self.length_scales, dtype=np.float64).reshape(-1)
        if scales.size == 0 or np.any(scales <= 0) or not np.all(np.isfinite(scales)):
            raise ValueError(f"Length scales must be finite and strictly positive, got {scales}")
        if not self.signal_variance > 0:
            raise ValueError(f"Signal variance must be positive, got {self.signal_variance}")
        if not self.noise_variance > 0:
            raise ValueError(f"Noise variance must be positive, got {self.noise_variance}")
        scales.setflags(write=False)
        object.__setattr__(self, "length_scales", scales)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def dim(self) -> int:
        return self.length_scales.size

    @property
    def prior_variance(self) -> float:
        """Predictive variance of a noisy observation with no data."""
        return self.signal_variance + self.noise_variance

    def same_as(self, other: "Hyperparameters") -> bool:
        return (
            self.signal_variance == other.signal_variance
            and self.noise_variance == other.noise_variance
            and np.array_equal(self.length_scales, other.length_scales)
        )


@dataclass(frozen=True)
class Prediction:
    """Predictive mean and variance for one output dimension.

    `mean` and `variance` are scalars for a single query point or arrays for a batch.
    """

    mean: np.ndarray
    variance: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


@dataclass(frozen=True)
class _Factor:
    hyper: Hyperparameters
    cholesky: np.ndarray  # lower triangular
    jitter: float


@dataclass(frozen=True, eq=False)
class GPModel:
    """A fitted GP. Immutable once built, so it can be shared between threads."""

    inputs: np.ndarray  # (m, d)
    outputs: np.ndarray  # (m, n_dims)
    hyper: tuple[Hyperparameters, ...]
    factors: tuple[_Factor, ...]  # one per output dimension, possibly the same object
    weights: np.ndarray  # (m, n_dims), K^-1 g per dimension

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_dims(self) -> int:
        return len(self.hyper)

    @property
    def input_dim(self) -> int:
        return self.hyper[0].dim

    def covariance(self, dim: int) -> np.ndarray:
        """K for one output dimension (without jitter)."""
        h = self.hyper[dim]
        return kernel_matrix(self.inputs, self.inputs, h) + h.noise_variance * np.eye(self.size)


def _check_dim(a: np.ndarray, hyper: Hyperparameters) -> None:
    if a.shape[-1] != hyper.dim:
        raise ValueError(f"Feature dimension {a.shape[-1]} does not match hyperparameters ({hyper.dim})")


def kernel(a_i: np.ndarray, a_j: np.ndarray, hyper: Hyperparameters) -> float:
    """Squared-exponential covariance between two feature vectors."""
    a_i = np.asarray(a_i, dtype=np.float64)
    a_j = np.asarray(a_j, dtype=np.float64)
    if a_i.shape != a_j.shape:
        raise ValueError(f"Feature vectors differ in shape: {a_i.shape} vs {a_j.shape}")
    _check_dim(a_i, hyper)
    scaled = (a_i - a_j) / hyper.length_scales
    return float(hyper.signal_variance * np.exp(-0.5 * np.dot(scaled, scaled)))


def kernel_matrix(a: np.ndarray, b: np.ndarray, hyper: Hyperparameters) -> np.ndarray:
    """Pairwise kernel between the rows of `a` (n, d) and `b` (m, d)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64)) / hyper.length_scales
    b = np.atleast_2d(np.asarray(b, dtype=np.float64)) / hyper.length_scales
    _check_dim(a, hyper)
    _check_dim(b, hyper)
    sq = np.sum(a**2, axis=1)[:, None] + np.sum(b**2, axis=1)[None, :] - 2.0 * a @ b.T
    np.maximum(sq, 0.0, out=sq)
    return hyper.signal_variance * np.exp(-0.5 * sq)


def _factorize(inputs: np.ndarray, hyper: Hyperparameters) -> _Factor:
    m = inputs.shape[0]
    k = kernel_matrix(inputs, inputs, hyper) + hyper.noise_variance * np.eye(m)
    jitter = 0.0
    while True:
        try:
            chol = linalg.cholesky(k + jitter * np.eye(m), lower=True, check_finite=False)
            if jitter > 0:
                logger.debug(f"Cholesky needed jitter {jitter:.3g} for m={m}")
            return _Factor(hyper=hyper, cholesky=chol, jitter=jitter)
        except linalg.LinAlgError:
            jitter = _JITTER_START * hyper.signal_variance if jitter == 0 else jitter * 10
            if jitter > _JITTER_MAX * hyper.signal_variance * (1 + 1e-9):
                raise GPFitError(f"Covariance of {m} points is not positive definite after jitter escalation")


def fit(inputs: np.ndarray, outputs: np.ndarray, hyper: Sequence[Hyperparameters]) -> GPModel:
    """Fit one GP per output dimension over a shared input set.

    Args:
        inputs: (m, d) feature vectors; m may be zero.
        outputs: (m, n_dims) observed disturbances.
        hyper: one Hyperparameters per output dimension.
    """
    hyper = tuple(hyper)
    if not hyper:
        raise ValueError("At least one output dimension is required")
    d = hyper[0].dim
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1, d)
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.size != inputs.shape[0] * len(hyper):
        raise ValueError(
            f"Outputs of shape {outputs.shape} do not match {inputs.shape[0]} points x {len(hyper)} dimensions"
        )
    outputs = outputs.reshape(inputs.shape[0], len(hyper))
    if any(h.dim != d for h in hyper):
        raise ValueError("All output dimensions must use the same feature dimension")
    if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(outputs))):
        raise ValueError("Training data must be finite")

    factors: list[_Factor] = []
    for h in hyper:
        shared = next((f for f in factors if f.hyper.same_as(h)), None)
        factors.append(shared if shared is not None else _factorize(inputs, h))

    weights = np.empty_like(outputs)
    for dim, f in enumerate(factors):
        if inputs.shape[0]:
            weights[:, dim] = linalg.cho_solve((f.cholesky, True), outputs[:, dim], check_finite=False)

    inputs.setflags(write=False)
    outputs.setflags(write=False)
    weights.setflags(write=False)
    return GPModel(inputs=inputs, outputs=outputs, hyper=hyper, factors=tuple(factors), weights=weights)


def prior(hyper: Sequence[Hyperparameters]) -> GPModel:
    """The model with no training data."""
    hyper = tuple(hyper)
    return fit(np.empty((0, hyper[0].dim)), np.empty((0, len(hyper))), hyper)


def predict(model: GPModel, a_star: np.ndarray) -> list[Prediction]:
    """Predictive mean/variance of a noisy observation, one Prediction per output dimension.

    `a_star` may be a single feature vector (d,) or a batch (n, d).
    """
    a_star = np.asarray(a_star, dtype=np.float64)
    single = a_star.ndim == 1
    queries = np.atleast_2d(a_star)
    _check_dim(queries, model.hyper[0])

    predictions = []
    solved: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for dim, (h, f) in enumerate(zip(model.hyper, model.factors)):
        if model.size == 0:
            mean = np.zeros(queries.shape[0])
            latent = np.full(queries.shape[0], h.signal_variance)
        else:
            key = id(f)
            if key not in solved:
                k_star = kernel_matrix(queries, model.inputs, h)  # (n, m)
                v = linalg.solve_triangular(f.cholesky, k_star.T, lower=True, check_finite=False)
                solved[key] = (k_star, v)
            k_star, v = solved[key]
            mean = k_star @ model.weights[:, dim]
            latent = np.maximum(h.signal_variance - np.sum(v**2, axis=0), 0.0)
        variance = latent + h.noise_variance
        if single:
            predictions.append(Prediction(mean=mean[0], variance=variance[0]))
        else:
            predictions.append(Prediction(mean=mean, variance=variance))
    return predictions


def log_density(predictions: Sequence[Prediction], outputs: np.ndarray) -> float:
    """Sum of independent Gaussian log-densities of `outputs` (n, n_dims) under batched predictions."""
    outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    total = 0.0
    for dim, p in enumerate(predictions):
        total += float(np.sum(norm.logpdf(outputs[:, dim], loc=p.mean, scale=p.std)))
    return total


def log_likelihood(model: GPModel, inputs: np.ndarray, outputs: np.ndarray) -> float:
    """Sum over points and output dimensions of log N(g | mu(a), sigma^2(a))."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    outputs = np.asarray(outputs, dtype=np.float64).reshape(inputs.shape[0], model.n_dims)
    if inputs.shape[0] == 0:
        raise ValueError("log_likelihood needs at least one data point")
    return log_density(predict(model, inputs), outputs)
