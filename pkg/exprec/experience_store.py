"""Run-partitioned, vertex-indexed store of experiences.

Every run owns an append-only record. Sealed runs never change; the live run only
grows. Readers take a StoreSnapshot, which exposes run data without the ground-truth
mode labels, so nothing downstream of a snapshot can depend on them.
"""

import bisect
import csv
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Callable, Sequence

import numpy as np
import yaml

from exprec.course import Path
from exprec.vehicle import unicycle, wrap_angle

FEATURE_DIM = 3
DISTURBANCE_DIM = 3
RUN_COLUMNS = ("run_id", "vertex", "t", *[f"a_{i}" for i in range(FEATURE_DIM)], "g_x", "g_y", "g_theta")


class UnknownRunError(KeyError):
    pass


class SealedRunError(RuntimeError):
    pass


def build_feature(v_cmd: float, omega_cmd: float, curvature: float) -> np.ndarray:
    """Feature vector a = (commanded speed, commanded turn rate, path curvature)."""
    return np.array([v_cmd, omega_cmd, curvature], dtype=np.float64)


def compute_disturbance(x_prev: np.ndarray, u_prev: np.ndarray, x_now: np.ndarray, dt: float) -> np.ndarray:
    """Observed disturbance (x_now - f(x_prev, u_prev)) / dt, heading residual wrapped first."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    residual = np.asarray(x_now, dtype=np.float64) - unicycle(np.asarray(x_prev), np.asarray(u_prev), dt)
    residual[2] = wrap_angle(residual[2])
    return residual / dt


@dataclass(frozen=True, eq=False)
class Experience:
    run: int
    vertex: int
    t: float
    a: np.ndarray
    g_hat: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        g = np.asarray(self.g_hat, dtype=np.float64).reshape(-1)
        if a.size != FEATURE_DIM or not np.all(np.isfinite(a)):
            raise ValueError(f"Feature vector must hold {FEATURE_DIM} finite values, got {a}")
        if g.size != DISTURBANCE_DIM or not np.all(np.isfinite(g)):
            raise ValueError(f"Disturbance must hold {DISTURBANCE_DIM} finite values, got {g}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "g_hat", g)

    @property
    def key(self) -> tuple[int, float]:
        return self.run, self.t


def as_arrays(experiences: Sequence[Experience]) -> tuple[np.ndarray, np.ndarray]:
    """Stack experiences into GP inputs (m, d_a) and outputs (m, 3)."""
    if not experiences:
        return np.empty((0, FEATURE_DIM)), np.empty((0, DISTURBANCE_DIM))
    return np.stack([e.a for e in experiences]), np.stack([e.g_hat for e in experiences])


@dataclass
class RunRecord:
    run_id: int
    # Ground truth, read only by reporting code
    mode: str
    experiences: list[Experience] = field(default_factory=list)
    by_vertex: list[list[int]] = field(default_factory=list)
    sealed: bool = False


class RunView:
    """Read-only, label-free view of a run, frozen at the experience count it was taken with."""

    def __init__(self, record: RunRecord, path: Path):
        self.run_id = record.run_id
        self._experiences = record.experiences
        self._by_vertex = record.by_vertex
        self._count = len(record.experiences)
        self._path = path

    def __len__(self) -> int:
        return self._count

    @property
    def experiences(self) -> Sequence[Experience]:
        return self._experiences[: self._count]

    def _at(self, vertices: list[int]) -> list[Experience]:
        out = []
        for v in vertices:
            indices = self._by_vertex[v]
            out.extend(self._experiences[i] for i in indices[: bisect.bisect_left(indices, self._count)])
        return out

    def window_behind(self, current_vertex: int, n_v: int) -> list[Experience]:
        return self._at(self._path.vertices_behind(current_vertex, n_v))

    def window_ahead(self, current_vertex: int, n_ahead: int) -> list[Experience]:
        return self._at(self._path.vertices_ahead(current_vertex, n_ahead))

    def tail(self, duration: float) -> list[Experience]:
        """Experiences from the last `duration` seconds of the run, oldest first."""
        if self._count == 0:
            return []
        latest = self._experiences[self._count - 1].t
        start = self._count
        # Small tolerance so a window of k*dt seconds holds exactly k samples
        while start > 0 and self._experiences[start - 1].t > latest - duration + 1e-9:
            start -= 1
        return list(self._experiences[start: self._count])


@dataclass(frozen=True)
class StoreSnapshot:
    sealed: tuple[RunView, ...]
    live: RunView | None


class ExperienceReader:
    """Label-free read access to a store: the path and consistent snapshots of its runs."""

    __slots__ = ("path", "_snapshot")

    def __init__(self, path: Path, snapshot: Callable[[], StoreSnapshot]):
        self.path = path
        self._snapshot = snapshot

    def snapshot(self) -> StoreSnapshot:
        return self._snapshot()


class ExperienceStore:
    def __init__(self, path: Path, logger: logging.Logger = logging.getLogger(__name__)):
        self.path = path
        self.logger = logger
        self._runs: dict[int, RunRecord] = {}
        self._sealed_views: tuple[RunView, ...] = ()
        self._live: int | None = None
        self._lock = threading.Lock()

    def start_run(self, mode: str) -> int:
        """Open a new live run. Any previous live run must have been sealed."""
        with self._lock:
            if self._live is not None:
                raise RuntimeError(f"Run {self._live} is still live; seal it before starting another")
            run_id = max(self._runs, default=0) + 1
            self._runs[run_id] = RunRecord(run_id, mode, by_vertex=[[] for _ in range(self.path.n_vertices)])
            self._live = run_id
        self.logger.info(f"Started run {run_id}")
        return run_id

    def _record(self, run_id: int) -> RunRecord:
        if run_id not in self._runs:
            raise UnknownRunError(run_id)
        return self._runs[run_id]

    def record(self, exp: Experience) -> None:
        with self._lock:
            rec = self._record(exp.run)
            if rec.sealed:
                raise SealedRunError(f"Run {exp.run} is sealed")
            if not 0 <= exp.vertex < self.path.n_vertices:
                raise ValueError(f"Vertex {exp.vertex} is outside the path (0..{self.path.n_vertices - 1})")
            if rec.experiences and exp.t <= rec.experiences[-1].t:
                raise ValueError(f"Run {exp.run} experiences must have increasing timestamps")
            rec.by_vertex[exp.vertex].append(len(rec.experiences))
            rec.experiences.append(exp)

    def seal(self, run_id: int) -> None:
        with self._lock:
            rec = self._record(run_id)
            rec.sealed = True
            if self._live == run_id:
                self._live = None
            self._sealed_views = tuple(RunView(r, self.path) for r in self._runs.values() if r.sealed)
        self.logger.info(f"Sealed run {run_id} with {len(rec.experiences)} experiences")

    def labels(self) -> dict[int, str]:
        """Ground-truth mode labels. For reporting only."""
        return {r.run_id: r.mode for r in self._runs.values()}

    def view(self, run_id: int) -> RunView:
        with self._lock:
            return RunView(self._record(run_id), self.path)

    def window_behind(self, run_id: int, current_vertex: int, n_v: int) -> list[Experience]:
        return self.view(run_id).window_behind(current_vertex, n_v)

    def window_ahead(self, run_id: int, current_vertex: int, n_ahead: int) -> list[Experience]:
        return self.view(run_id).window_ahead(current_vertex, n_ahead)

    def snapshot(self) -> StoreSnapshot:
        with self._lock:
            live = RunView(self._runs[self._live], self.path) if self._live is not None else None
            return StoreSnapshot(sealed=self._sealed_views, live=live)

    def reader(self) -> ExperienceReader:
        return ExperienceReader(self.path, self.snapshot)

    def save(self, directory: str | FilePath) -> None:
        """Write path.csv, runs/run_XXXX.csv and manifest.yaml under `directory`."""
        directory = FilePath(directory)
        (directory / "runs").mkdir(parents=True, exist_ok=True)
        self.path.save(directory / "path.csv")
        with self._lock:
            records = list(self._runs.values())
        for rec in records:
            with open(directory / "runs" / f"run_{rec.run_id:04d}.csv", "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(RUN_COLUMNS)
                for e in rec.experiences:
                    writer.writerow([e.run, e.vertex, repr(e.t), *map(repr, map(float, e.a)), *map(repr, map(float, e.g_hat))])
        manifest = {
            "closed": self.path.closed,
            "spacing": self.path.spacing,
            "runs": [{"run_id": r.run_id, "mode": r.mode, "sealed": r.sealed} for r in records],
        }
        with open(directory / "manifest.yaml", "w") as f:
            yaml.safe_dump(manifest, f, sort_keys=False)

    @classmethod
    def load(cls, directory: str | FilePath, logger: logging.Logger = logging.getLogger(__name__)) -> "ExperienceStore":
        directory = FilePath(directory)
        with open(directory / "manifest.yaml") as f:
            manifest = yaml.safe_load(f)
        store = cls(Path.load(directory / "path.csv", manifest["closed"], manifest["spacing"]), logger)
        for entry in manifest["runs"]:
            run_id = int(entry["run_id"])
            rec = RunRecord(run_id, entry["mode"], by_vertex=[[] for _ in range(store.path.n_vertices)])
            store._runs[run_id] = rec
            with open(directory / "runs" / f"run_{run_id:04d}.csv", newline="") as f:
                reader = csv.reader(f)
                header = next(reader)
                if tuple(header) != RUN_COLUMNS:
                    raise ValueError(f"Unexpected run log header {header}")
                for row in reader:
                    values = [float(c) for c in row[2:]]
                    exp = Experience(run=int(row[0]), vertex=int(row[1]), t=values[0],
                                     a=values[1: 1 + FEATURE_DIM], g_hat=values[1 + FEATURE_DIM:])
                    rec.by_vertex[exp.vertex].append(len(rec.experiences))
                    rec.experiences.append(exp)
            # A run that was live when saved is resumed as sealed; it can no longer be extended
            rec.sealed = True
            if not entry["sealed"]:
                logger.warning(f"Run {run_id} was not sealed when saved; loading it as sealed")
        store._sealed_views = tuple(RunView(r, store.path) for r in store._runs.values())
        logger.info(f"Loaded {len(store._runs)} runs from {directory}")
        return store
