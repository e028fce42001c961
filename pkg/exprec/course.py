"""Reference-path generation from a list of straight and arc segments."""

import csv
from dataclasses import dataclass
from pathlib import Path as FilePath

import numpy as np

from exprec.utils.configurations import CourseConfiguration, Segment
from exprec.vehicle import wrap_angle

PATH_COLUMNS = ("vertex", "x", "y", "theta", "curvature")


class CourseError(ValueError):
    """Invalid course description."""


@dataclass(frozen=True, eq=False)
class Path:
    """Vertices along the reference path with pose and curvature."""

    xy: np.ndarray  # (V, 2)
    theta: np.ndarray  # (V,)
    curvature: np.ndarray  # (V,)
    closed: bool
    spacing: float

    @property
    def n_vertices(self) -> int:
        return self.theta.size

    @property
    def length(self) -> float:
        n = self.n_vertices if self.closed else self.n_vertices - 1
        return n * self.spacing

    def vertices_behind(self, current: int, count: int) -> list[int]:
        """The `count` vertices ending at `current` (inclusive), in path order."""
        if count < 1:
            raise ValueError(f"Window must cover at least one vertex, got {count}")
        count = min(count, self.n_vertices)
        first = current - count + 1
        if self.closed:
            return [v % self.n_vertices for v in range(first, current + 1)]
        return list(range(max(first, 0), current + 1))

    def vertices_ahead(self, current: int, count: int) -> list[int]:
        """The `count` vertices strictly ahead of `current`, truncated at the end of an open path."""
        if count < 1:
            raise ValueError(f"Window must cover at least one vertex, got {count}")
        if self.closed:
            count = min(count, self.n_vertices - 1)
            return [v % self.n_vertices for v in range(current + 1, current + count + 1)]
        return list(range(current + 1, min(current + count + 1, self.n_vertices)))

    def advance(self, previous: int, current: int) -> int:
        """Signed number of vertices travelled from `previous` to `current`."""
        delta = current - previous
        if self.closed:
            delta = (delta + self.n_vertices // 2) % self.n_vertices - self.n_vertices // 2
        return delta

    def save(self, path: str | FilePath) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(PATH_COLUMNS)
            for v in range(self.n_vertices):
                writer.writerow([v, repr(float(self.xy[v, 0])), repr(float(self.xy[v, 1])),
                                 repr(float(self.theta[v])), repr(float(self.curvature[v]))])

    @classmethod
    def load(cls, path: str | FilePath, closed: bool, spacing: float) -> "Path":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if tuple(header) != PATH_COLUMNS:
                raise CourseError(f"Unexpected path header {header}")
            rows = np.array([[float(c) for c in row] for row in reader])
        if rows.size == 0 or not np.array_equal(rows[:, 0], np.arange(rows.shape[0])):
            raise CourseError(f"Path file {path} has missing or unordered vertices")
        return cls(xy=rows[:, 1:3], theta=rows[:, 3], curvature=rows[:, 4], closed=closed, spacing=spacing)


def _segment_length_and_curvature(segment: Segment) -> tuple[float, float]:
    if segment.type == "straight":
        if segment.length is None or segment.length <= 0:
            raise CourseError(f"Straight segment needs a positive length, got {segment.length}")
        return float(segment.length), 0.0
    if segment.type == "arc":
        if segment.radius is None or segment.radius <= 0:
            raise CourseError(f"Arc segment needs a positive radius, got {segment.radius}")
        if segment.angle is None or segment.angle == 0:
            raise CourseError(f"Arc segment needs a non-zero angle, got {segment.angle}")
        return abs(segment.angle) * segment.radius, float(np.sign(segment.angle)) / segment.radius
    raise CourseError(f"Unknown segment type `{segment.type}`")


def segment_lengths(config: CourseConfiguration) -> list[float]:
    return [_segment_length_and_curvature(s)[0] for s in config.segments]


def generate_path(config: CourseConfiguration) -> Path:
    """Sample the course at (approximately) the configured vertex spacing.

    An open path includes both endpoints; a closed path drops the endpoint that
    coincides with the start.
    """
    if not config.segments:
        raise CourseError("A course needs at least one segment")
    pieces = [_segment_length_and_curvature(s) for s in config.segments]
    lengths = np.array([p[0] for p in pieces])
    curvatures = np.array([p[1] for p in pieces])
    total = float(lengths.sum())
    n_intervals = max(int(round(total / config.spacing)), 1)
    s = np.linspace(0.0, total, n_intervals + 1)
    if config.closed:
        s = s[:-1]

    # Pose at the start of each segment
    starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    poses = np.empty((len(pieces), 3))
    pose = np.array(config.start, dtype=np.float64)
    for i, (length, kappa) in enumerate(pieces):
        poses[i] = pose
        pose = _integrate(pose, kappa, length)

    index = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(pieces) - 1)
    xy = np.empty((s.size, 2))
    theta = np.empty(s.size)
    for j, (seg, ds) in enumerate(zip(index, s - starts[index])):
        p = _integrate(poses[seg], curvatures[seg], ds)
        xy[j] = p[:2]
        theta[j] = p[2]
    return Path(
        xy=xy,
        theta=wrap_angle(theta),
        curvature=curvatures[index].astype(np.float64),
        closed=config.closed,
        spacing=total / n_intervals,
    )


def _integrate(pose: np.ndarray, kappa: float, ds: float) -> np.ndarray:
    x, y, theta = pose
    if kappa == 0.0:
        return np.array([x + ds * np.cos(theta), y + ds * np.sin(theta), theta])
    end = theta + kappa * ds
    return np.array([x + (np.sin(end) - np.sin(theta)) / kappa, y - (np.cos(end) - np.cos(theta)) / kappa, end])
