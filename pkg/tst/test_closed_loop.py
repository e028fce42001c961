"""Closed-loop experiments on the benchmark course over many seeds.

These take tens of minutes; run them with `pytest -m slow`. EXPREC_SEEDS overrides the seed count.
"""

import functools
import os

import numpy as np
import pytest

from exprec.harness import CORNER_CURVATURE, ExperimentReport, run_experiment
from exprec.utils.configurations import ExperimentConfiguration, ExperimentSchedule, ScheduledRun
from scripts.make_schedule import SCHEDULES

SEEDS = range(int(os.environ.get("EXPREC_SEEDS", "10")))

pytestmark = pytest.mark.slow


@functools.lru_cache(maxsize=None)
def _experiment(schedule: str, method: str, seed: int) -> ExperimentReport:
    runs = [ScheduledRun(i, mode) for i, mode in enumerate(SCHEDULES[schedule](), start=1)]
    config = ExperimentConfiguration(schedule=ExperimentSchedule(runs=runs, method=method, seed=seed))
    report = run_experiment(config)
    assert not report.failed, f"{schedule}/{method}/seed {seed}: runs {report.failed} failed"
    return report


def _seen_before(report: ExperimentReport) -> set[int]:
    """Run ids whose mode already appeared in an earlier run."""
    seen, out = set(), set()
    for run_id, mode in sorted(report.labels.items()):
        if mode in seen:
            out.add(run_id)
        seen.add(mode)
    return out


def test_same_mode_runs_are_recommended_at_corners():
    rates = []
    for seed in SEEDS:
        report = _experiment("alternating", "proposed", seed)
        eligible = _seen_before(report)
        chosen = [
            r for r in report.records
            if r.live_run in eligible and abs(r.curvature) > CORNER_CURVATURE and r.chosen_run is not None
        ]
        same = sum(report.labels[r.chosen_run] == report.labels[r.live_run] for r in chosen)
        rates.append(same / len(chosen) if chosen else 0.0)
    assert np.median(rates) >= 0.8


def test_transition_prediction_error_beats_last_run():
    ratios = []
    for seed in SEEDS:
        proposed = _experiment("alternating", "proposed", seed)
        baseline = _experiment("alternating", "last_run", seed)
        modes = [r.mode for r in proposed.runs]
        transitions = [i for i in range(1, len(modes)) if modes[i - 1] == "nominal" and modes[i] == "altered"]
        ours = np.mean([proposed.runs[i].m_rmse for i in transitions])
        theirs = np.mean([baseline.runs[i].m_rmse for i in transitions])
        ratios.append(ours / theirs)
    assert np.median(ratios) <= 0.7


def test_prediction_uncertainty_is_calibrated():
    per_run: dict[int, list[float]] = {}
    for seed in SEEDS:
        report = _experiment("alternating", "proposed", seed)
        for run in report.runs:
            if run.index in _seen_before(report):
                per_run.setdefault(run.index, []).append(run.m_rmsz)
    medians = {index: float(np.median(values)) for index, values in per_run.items()}
    assert all(0.3 <= m <= 1.5 for m in medians.values()), medians


def test_long_term_cost_beats_last_run():
    ratios = []
    for seed in SEEDS:
        proposed = _experiment("cycling", "proposed", seed)
        baseline = _experiment("cycling", "last_run", seed)
        ratios.append(proposed.total_cost / baseline.total_cost)
    assert np.median(ratios) <= 0.85


def test_rejections_become_rarer_with_exposure():
    trends = [_experiment("cycling", "proposed", seed).summary()["aggregate"]["none_trend"] for seed in SEEDS]
    trends = np.array(trends)
    assert np.median(trends[:, -1]) < np.median(trends[:, 0])


def test_learned_model_lowers_cost_in_altered_mode():
    runs = [ScheduledRun(1, "altered"), ScheduledRun(2, "altered")]
    costs = {}
    for method in ("proposed", "prior_only"):
        config = ExperimentConfiguration(schedule=ExperimentSchedule(runs=runs, method=method, seed=11))
        costs[method] = run_experiment(config).runs[1].cumulative_cost
    assert costs["proposed"] < costs["prior_only"]
