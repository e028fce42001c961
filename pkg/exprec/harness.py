"""Multi-run experiment runner and report tooling."""

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path as FilePath

import numpy as np

from exprec.controller import PathTrackingMPC
from exprec.course import generate_path
from exprec.experience_store import ExperienceStore
from exprec.metrics import (
    RecommendationRecord,
    RunMetrics,
    confusion_matrix,
    none_fraction_trend,
    run_prediction_metrics,
    source_histogram,
)
from exprec.recommender import ControlGPChannel, ExperiencePolicy, ExperienceRecommender, LastRunPolicy, PriorOnlyPolicy
from exprec.runtime import Runtime
from exprec.runtime.agents import MPCAgent
from exprec.utils.configurations import ExperimentConfiguration
from exprec.utils.experience_subscriber import ExperienceSubscriber
from exprec.utils.logging_subscriber import LoggingSubscriber
from exprec.utils.recommender_subscriber import RecommenderSubscriber
from exprec.utils.step_log_subscriber import StepLogSubscriber
from exprec.vehicle_environment import VehicleEnvironment

# Decisions at vertices sharper than this count as corners
CORNER_CURVATURE = 0.1

_POLICIES: dict[str, type[ExperiencePolicy]] = {
    "proposed": ExperienceRecommender,
    "last_run": LastRunPolicy,
    "prior_only": PriorOnlyPolicy,
}


@dataclass
class ExperimentReport:
    method: str
    seed: int
    runs: list[RunMetrics]
    confusion: dict[str, dict[str, float]] = field(default_factory=dict)
    corner_confusion: dict[str, dict[str, float]] = field(default_factory=dict)
    records: list[RecommendationRecord] = field(default_factory=list)
    labels: dict[int, str] = field(default_factory=dict)

    @property
    def failed(self) -> list[int]:
        return [r.index for r in self.runs if r.failed]

    @property
    def total_cost(self) -> float:
        return float(sum(r.cumulative_cost for r in self.runs))

    def summary(self) -> dict:
        valid = [r for r in self.runs if not r.failed]
        return {
            "method": self.method,
            "seed": self.seed,
            "runs": [dataclasses.asdict(r) for r in self.runs],
            "aggregate": {
                "total_cost": self.total_cost,
                "mean_m_rmse": _nanmean([r.m_rmse for r in valid]),
                "mean_m_rmsz": _nanmean([r.m_rmsz for r in valid]),
                "mean_speed": _nanmean([r.average_speed for r in valid]),
                "failed_runs": self.failed,
                "none_trend": none_fraction_trend([r.mode for r in self.runs], [r.none_fraction for r in self.runs]),
            },
            "confusion": self.confusion,
            "corner_confusion": self.corner_confusion,
        }


def _nanmean(values: list[float]) -> float:
    values = [v for v in values if np.isfinite(v)]
    return float(np.mean(values)) if values else float("nan")


def run_experiment(
    config: ExperimentConfiguration, out_dir: str | FilePath | None = None, store: ExperienceStore | None = None
) -> ExperimentReport:
    """Drive every scheduled run in closed loop and collect per-run metrics.

    Args:
        config: schedule, method, seed and component configurations.
        out_dir: when given, per-run CSV logs, the store and summary.json are written there.
        store: continue from an existing store (its path must match the course).
    """
    logger = config.logger
    schedule = config.schedule
    modes = schedule.mode_table
    path = generate_path(schedule.course)
    store = store if store is not None else ExperienceStore(path, logger)
    hyper = config.gp.hyperparameters()
    dt = config.controller.dt
    out_dir = FilePath(out_dir) if out_dir is not None else None

    nominal_steps = int(np.ceil(path.length / (config.controller.v_desired * dt)))
    max_steps = int(config.max_lap_factor * nominal_steps)
    seeds = np.random.SeedSequence(schedule.seed).spawn(len(schedule.runs))
    logger.info(f"Running {len(schedule.runs)} runs with method `{schedule.method}` on a {path.length:.1f} m course")

    runs: list[RunMetrics] = []
    records: list[RecommendationRecord] = []
    for scheduled, seed in zip(schedule.runs, seeds):
        plant_seed, policy_seed = seed.spawn(2)
        run_id = store.start_run(scheduled.mode)
        run_dir = out_dir / f"run_{scheduled.index:04d}" if out_dir is not None else None

        # Each run starts from the prior
        channel = ControlGPChannel(hyper)
        policy = _POLICIES[schedule.method](store.reader(), channel, config.recommender, np.random.default_rng(policy_seed), logger)
        switch = None
        if scheduled.switch_at_vertex is not None:
            switch = (scheduled.switch_at_vertex, modes[scheduled.switch_to])
        environment = VehicleEnvironment(
            path, modes[scheduled.mode], dt, np.random.default_rng(plant_seed),
            config.divergence_limit, max_steps, switch, logger,
        )
        agent = MPCAgent(PathTrackingMPC(path, config.controller), channel)
        step_log = StepLogSubscriber(dt, run_dir)
        recommendations = RecommenderSubscriber(policy, path, run_dir)
        subscribers = [
            ExperienceSubscriber(store, run_id, dt),
            recommendations,
            step_log,
            LoggingSubscriber(logger, scheduled.index),
        ]
        Runtime(environment, agent, subscribers, logger=logger).run()

        labels = store.labels()
        m_rmse, m_rmsz = run_prediction_metrics(step_log.predicted_rate_mean, step_log.predicted_rate_std, step_log.realized_rate)
        chosen = [e.run_id for _, e in recommendations.events]
        sources = source_histogram(chosen, labels)
        xy = np.array([[r[2], r[3]] for r in step_log.rows])
        distance = float(np.sum(np.linalg.norm(np.diff(xy, axis=0), axis=1))) if len(xy) > 1 else 0.0
        metrics = RunMetrics(
            index=scheduled.index,
            mode=scheduled.mode,
            status=environment.status,
            steps=environment.steps,
            m_rmse=m_rmse,
            m_rmsz=m_rmsz,
            cumulative_cost=float(step_log.stage_costs.sum()),
            average_speed=distance / max(environment.t - dt, dt),
            max_abs_lateral=float(np.max(np.abs(step_log.lateral))) if step_log.rows else 0.0,
            none_fraction=sources["none"],
            sources=sources,
            safety_flags=step_log.safety_flags,
            recommender_time_s=policy.total_time_s,
        )
        runs.append(metrics)
        records.extend(
            RecommendationRecord(run_id, e.vertex, float(path.curvature[e.vertex]), e.run_id)
            for _, e in recommendations.events
        )
        log = logger.warning if metrics.failed else logger.info
        log(
            f"Run {scheduled.index} ({scheduled.mode}): {metrics.status}, M-RMSE={m_rmse:.4f} M-RMSZ={m_rmsz:.3f} "
            f"cost={metrics.cumulative_cost:.1f} none={metrics.none_fraction:.2f}"
        )

    labels = store.labels()
    report = ExperimentReport(
        method=schedule.method,
        seed=schedule.seed,
        runs=runs,
        confusion=confusion_matrix(records, labels),
        corner_confusion=confusion_matrix(records, labels, CORNER_CURVATURE),
        records=records,
        labels=labels,
    )
    if out_dir is not None:
        store.save(out_dir / "store")
        write_summary(report, out_dir)
    return report


def write_summary(report: ExperimentReport, out_dir: str | FilePath) -> None:
    out_dir = FilePath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.json", "w") as f:
        json.dump(report.summary(), f, indent=2)


def load_summary(in_dir: str | FilePath) -> dict:
    with open(FilePath(in_dir) / "summary.json") as f:
        return json.load(f)


def format_report(summary: dict) -> str:
    """Per-run metric table plus aggregates and the confusion matrices."""
    lines = [f"Method: {summary['method']}  seed: {summary['seed']}", "-" * 86]
    lines.append(f"{'run':>4} {'mode':<10} {'status':<9} {'M-RMSE':>8} {'M-RMSZ':>8} {'cost':>10} {'speed':>6} {'none':>6}")
    for r in summary["runs"]:
        lines.append(
            f"{r['index']:>4} {r['mode']:<10} {r['status']:<9} {r['m_rmse']:>8.4f} {r['m_rmsz']:>8.3f} "
            f"{r['cumulative_cost']:>10.1f} {r['average_speed']:>6.2f} {r['none_fraction']:>6.2f}"
        )
    agg = summary["aggregate"]
    lines.append("-" * 86)
    lines.append(
        f"total cost {agg['total_cost']:.1f}  mean M-RMSE {agg['mean_m_rmse']:.4f}  "
        f"mean M-RMSZ {agg['mean_m_rmsz']:.3f}  mean speed {agg['mean_speed']:.2f}  failed {agg['failed_runs']}"
    )
    lines.append("none fraction by same-mode exposure: " + " ".join(f"{v:.2f}" for v in agg["none_trend"]))
    for title, key in (("Recommendation sources", "confusion"), ("Recommendation sources at corners", "corner_confusion")):
        lines.append("")
        lines.append(title)
        for mode, row in summary[key].items():
            cells = "  ".join(f"{col}={frac:.2f}" for col, frac in row.items())
            lines.append(f"  {mode:<10} {cells}")
    return "\n".join(lines)


def compare(a: dict, b: dict) -> list[dict]:
    """Paired per-run deltas (b - a) and ratios (b / a) of the headline metrics."""
    if len(a["runs"]) != len(b["runs"]):
        raise ValueError(f"Experiments have different run counts ({len(a['runs'])} vs {len(b['runs'])})")
    rows = []
    for ra, rb in zip(a["runs"], b["runs"]):
        row = {"index": ra["index"], "mode": ra["mode"]}
        for key in ("m_rmse", "m_rmsz", "cumulative_cost", "average_speed"):
            row[f"{key}_delta"] = rb[key] - ra[key]
            row[f"{key}_ratio"] = rb[key] / ra[key] if ra[key] else float("nan")
        rows.append(row)
    return rows


def format_comparison(rows: list[dict], a_name: str, b_name: str) -> str:
    lines = [f"Paired deltas ({b_name} - {a_name})", "-" * 72]
    lines.append(f"{'run':>4} {'mode':<10} {'dM-RMSE':>9} {'dM-RMSZ':>9} {'dcost':>10} {'cost ratio':>10} {'dspeed':>7}")
    for r in rows:
        lines.append(
            f"{r['index']:>4} {r['mode']:<10} {r['m_rmse_delta']:>9.4f} {r['m_rmsz_delta']:>9.3f} "
            f"{r['cumulative_cost_delta']:>10.1f} {r['cumulative_cost_ratio']:>10.3f} {r['average_speed_delta']:>7.3f}"
        )
    return "\n".join(lines)
