"""Experience recommendation: pick the past run whose local dynamics best explain the live data.

For every candidate run a local GP is fitted to the run's data over the section of the
path the vehicle just traversed. Runs whose GP puts too many live samples outside its
3-sigma bounds are rejected with a binomial test; runs less likely than the GP prior to
have generated the live data are rejected as well. Experiences ahead of the vehicle
from the most likely remaining run are fed, ten at a time, into the control GP.
"""

import abc
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import binom
from typing_extensions import override

from exprec import gp
from exprec.experience_store import Experience, ExperienceReader, StoreSnapshot, as_arrays
from exprec.utils.configurations import RecommenderConfiguration


@dataclass(frozen=True)
class RunScore:
    run_id: int
    p_b: float
    accepted: bool
    log_prob: float  # L_i, nats
    log_prob_prior: float
    n_out: int
    trials: int
    m_n: int
    diagnostic: str | None = None


@dataclass(frozen=True)
class Recommendation:
    run_id: int | None
    scores: tuple[RunScore, ...]


@dataclass(frozen=True)
class ControlGPSet:
    experiences: tuple[Experience, ...] = ()
    generation: int = 0

    def __len__(self) -> int:
        return len(self.experiences)


def binomial_tail(n_out: int, m: int, p: float) -> float:
    """P(X >= n_out) for X ~ Binomial(m, p), from the regularized incomplete beta function."""
    if not 0 <= n_out <= m:
        raise ValueError(f"Need 0 <= n_out <= m, got n_out={n_out}, m={m}")
    if not 0 < p < 1:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if n_out == 0:
        return 1.0
    # sf(k) is P(X > k)
    return float(binom.sf(n_out - 1, m, p))


def count_outliers(predictions: Sequence[gp.Prediction], observations: np.ndarray) -> tuple[int, int]:
    """Count (sample, dimension) trials with |g - mu| > 3 sigma.

    Args:
        predictions: one batched Prediction per output dimension.
        observations: (m_n, n_dims) observed disturbances.
    """
    observations = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    if observations.shape[1] != len(predictions):
        raise ValueError(f"{len(predictions)} predicted dimensions but observations have {observations.shape[1]}")
    n_out = 0
    for dim, p in enumerate(predictions):
        mean = np.broadcast_to(p.mean, observations.shape[0])
        std = np.broadcast_to(p.std, observations.shape[0])
        n_out += int(np.count_nonzero(np.abs(observations[:, dim] - mean) > 3.0 * std))
    return n_out, observations.size


def score_run(
    candidate: Sequence[Experience],
    live: Sequence[Experience],
    hyper: Sequence[gp.Hyperparameters],
    config: RecommenderConfiguration,
    run_id: int = 0,
    prior_log_prob: float | None = None,
) -> RunScore:
    """Binomial outlier test plus log-probability of the live window under the candidate's GP."""
    if not live:
        raise ValueError("Scoring needs a non-empty live window")
    live_a, live_g = as_arrays(live)
    if prior_log_prob is None:
        prior_log_prob = gp.log_likelihood(gp.prior(hyper), live_a, live_g)
    m_n = len(live)

    try:
        model = gp.fit(*as_arrays(candidate), hyper)
    except gp.GPFitError as e:
        return RunScore(run_id, 0.0, False, -np.inf, prior_log_prob, 0, live_g.size, m_n, diagnostic=str(e))

    predictions = gp.predict(model, live_a)
    n_out, trials = count_outliers(predictions, live_g)
    p_b = binomial_tail(n_out, trials, config.outlier_probability)
    log_prob = gp.log_density(predictions, live_g)
    # A tie with the prior is not an improvement over having no experience
    accepted = p_b >= config.alpha and log_prob > prior_log_prob
    return RunScore(run_id, p_b, accepted, log_prob, prior_log_prob, n_out, trials, m_n)


def recommend(
    live: Sequence[Experience],
    candidates: Mapping[int, Sequence[Experience]],
    hyper: Sequence[gp.Hyperparameters],
    config: RecommenderConfiguration,
) -> Recommendation:
    """Score the most recent candidate runs and return the accepted run with the largest L_i."""
    if not live or not candidates:
        return Recommendation(None, ())
    live_a, live_g = as_arrays(live)
    prior_log_prob = gp.log_likelihood(gp.prior(hyper), live_a, live_g)
    run_ids = sorted(candidates)[-config.max_candidates:]
    scores = tuple(score_run(candidates[r], live, hyper, config, r, prior_log_prob) for r in run_ids)
    accepted = [s for s in scores if s.accepted]
    if not accepted:
        return Recommendation(None, scores)
    # Ties go to the most recent run
    best = max(accepted, key=lambda s: (s.log_prob, s.run_id))
    return Recommendation(best.run_id, scores)


def update_control_set(
    current: ControlGPSet,
    recommended: Sequence[Experience] | None,
    rng: np.random.Generator,
    config: RecommenderConfiguration = RecommenderConfiguration(),
) -> ControlGPSet:
    """Add up to N_add recommended experiences and subsample to N_ctl, or drop N_drop when nothing is recommended."""
    if recommended is None:
        keep = len(current) - min(config.n_drop, len(current))
        chosen = rng.choice(len(current), size=keep, replace=False) if keep else []
        return ControlGPSet(tuple(current.experiences[i] for i in sorted(chosen)), current.generation + 1)

    drawn_idx = rng.choice(len(recommended), size=min(config.n_add, len(recommended)), replace=False)
    present = {e.key for e in current.experiences}
    union = list(current.experiences) + [recommended[i] for i in sorted(drawn_idx) if recommended[i].key not in present]
    size = min(config.n_control, len(union))
    chosen = rng.choice(len(union), size=size, replace=False) if size else []
    return ControlGPSet(tuple(union[i] for i in sorted(chosen)), current.generation + 1)


@dataclass(frozen=True, eq=False)
class PublishedControlGP:
    control_set: ControlGPSet
    model: gp.GPModel


class ControlGPChannel:
    """Holds the latest published control GP. Readers always get a complete set and model."""

    def __init__(self, hyper: Sequence[gp.Hyperparameters]):
        self.hyper = tuple(hyper)
        self._lock = threading.Lock()
        self._latest = PublishedControlGP(ControlGPSet(), gp.prior(self.hyper))

    def publish(self, control_set: ControlGPSet) -> PublishedControlGP:
        # Fit outside the lock so readers never wait on the factorization
        published = PublishedControlGP(control_set, gp.fit(*as_arrays(control_set.experiences), self.hyper))
        with self._lock:
            self._latest = published
        return published

    def latest(self) -> PublishedControlGP:
        with self._lock:
            return self._latest


@dataclass(frozen=True)
class RecommendationEvent:
    """Outcome of one recommender invocation, for logging."""

    t: float
    vertex: int
    skipped: bool
    run_id: int | None = None
    scores: tuple[RunScore, ...] = ()
    control_size: int = 0
    elapsed_s: float = 0.0


class ExperiencePolicy(abc.ABC):
    """Decides which experiences feed the control GP, one invocation at a time.

    A policy reads the store through an ExperienceReader and never sees mode labels.
    """

    def __init__(
        self,
        reader: ExperienceReader,
        channel: ControlGPChannel,
        config: RecommenderConfiguration,
        rng: np.random.Generator | None = None,
        logger: logging.Logger = logging.getLogger(__name__),
    ):
        self.reader = reader
        self.channel = channel
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.logger = logger
        self.total_time_s = 0.0
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()

    @abc.abstractmethod
    def _choose(self, snapshot: StoreSnapshot, live: list[Experience], vertex: int) -> tuple[int | None, tuple[RunScore, ...]]:
        """Pick the run to draw experiences from, or None."""

    def step(self) -> RecommendationEvent:
        """One invocation: score, update the control set and publish it."""
        started = time.perf_counter()
        snapshot = self.reader.snapshot()
        if snapshot.live is None or len(snapshot.live) == 0:
            return RecommendationEvent(t=0.0, vertex=0, skipped=True)
        live = snapshot.live.tail(self.config.live_window_s)
        latest = live[-1]
        if len(live) < self.config.min_live_samples:
            return RecommendationEvent(t=latest.t, vertex=latest.vertex, skipped=True)

        run_id, scores = self._choose(snapshot, live, latest.vertex)
        current = self.channel.latest().control_set
        if run_id is None:
            updated = update_control_set(current, None, self.rng, self.config)
        else:
            source = next(v for v in snapshot.sealed if v.run_id == run_id)
            ahead = source.window_ahead(latest.vertex, self.config.ahead_vertices)
            updated = update_control_set(current, ahead, self.rng, self.config)
        self.channel.publish(updated)

        elapsed = time.perf_counter() - started
        self.total_time_s += elapsed
        for s in scores:
            if s.diagnostic is not None:
                self.logger.warning(f"Run {s.run_id} rejected, candidate GP could not be fitted: {s.diagnostic}")
            self.logger.debug(
                f"t={latest.t:.1f} run {s.run_id}: p_b={s.p_b:.4f} n_out={s.n_out}/{s.trials} "
                f"L={s.log_prob:.2f} prior={s.log_prob_prior:.2f} accepted={s.accepted} chosen={s.run_id == run_id}"
            )
        return RecommendationEvent(latest.t, latest.vertex, False, run_id, scores, len(updated), elapsed)

    def run_in_new_thread(self, interval_s: float = 0.5) -> threading.Thread:
        """Invoke `step` periodically on a background thread until `stop` is called."""
        self._stop.clear()

        def loop():
            while not self._stop.is_set():
                try:
                    self.step()
                except Exception as e:
                    self.logger.error(f"Recommender step failed: {e}")
                self._stop.wait(interval_s)

        self._thread = threading.Thread(target=loop, daemon=True)
        self._thread.start()
        return self._thread

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None and self._thread.is_alive():
            self._thread.join(timeout=5.0)
        self._thread = None


class ExperienceRecommender(ExperiencePolicy):
    """Scores every stored run against the live window and recommends the most likely one.

    Candidate GPs use the same hyperparameters as the control GP.
    """

    @override
    def _choose(self, snapshot: StoreSnapshot, live: list[Experience], vertex: int) -> tuple[int | None, tuple[RunScore, ...]]:
        # Candidate windows cover the vertices the live window spans
        n_v = max(self.reader.path.advance(live[0].vertex, vertex) + 1, 1)
        views = snapshot.sealed[-self.config.max_candidates:]
        candidates = {v.run_id: v.window_behind(vertex, n_v) for v in views}
        result = recommend(live, candidates, self.channel.hyper, self.config)
        return result.run_id, result.scores


class LastRunPolicy(ExperiencePolicy):
    """Baseline: always draw from the run immediately before the live one."""

    @override
    def _choose(self, snapshot: StoreSnapshot, live: list[Experience], vertex: int) -> tuple[int | None, tuple[RunScore, ...]]:
        previous = [v.run_id for v in snapshot.sealed if v.run_id == live[-1].run - 1]
        return (previous[0] if previous else None), ()


class PriorOnlyPolicy(ExperiencePolicy):
    """Keeps the control GP empty: the controller always runs on the prior."""

    @override
    def _choose(self, snapshot: StoreSnapshot, live: list[Experience], vertex: int) -> tuple[int | None, tuple[RunScore, ...]]:
        return None, ()
