"""Scenario geometry and the projection between 2D tracks and distance-to-conflict.

Every agent moves along a polyline :class:`Path` toward a square
:class:`ContestedSpace`. The model works on the signed distance ``d`` from
the agent's position (foot point on its path) to the point where the path
enters the contested space; ``d > 0`` before entry, ``d <= 0`` once inside.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

DEFAULT_LATERAL_TOLERANCE = 5.0  # m


class ProjectionError(ValueError):
    """A point could not be mapped onto a path."""


class DegenerateObservationError(ValueError):
    """Observation window has zero or negative duration."""


@dataclass(frozen=True, eq=False)
class Path:
    """Polyline of 2D waypoints in metres."""

    waypoints: np.ndarray
    arc_length: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pts = np.array(self.waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("a path needs at least two 2D waypoints")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg <= 0.0):
            raise ValueError("consecutive waypoints must be distinct")
        pts.setflags(write=False)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        s.setflags(write=False)
        object.__setattr__(self, "waypoints", pts)
        object.__setattr__(self, "arc_length", s)

    @property
    def length(self) -> float:
        return float(self.arc_length[-1])

    def foot_point(self, point: Sequence[float]) -> tuple[float, float]:
        """Arc length of the nearest point on the path and the lateral distance to it.

        Ties between segments go to the earliest segment.
        """
        p = np.asarray(point, dtype=float)
        a = self.waypoints[:-1]
        ab = self.waypoints[1:] - a
        seg_len2 = np.einsum("ij,ij->i", ab, ab)
        frac = np.clip(np.einsum("ij,ij->i", p - a, ab) / seg_len2, 0.0, 1.0)
        foot = a + frac[:, None] * ab
        dist = np.hypot(*(p - foot).T)
        k = int(np.argmin(dist))  # first minimum
        s = self.arc_length[k] + frac[k] * np.sqrt(seg_len2[k])
        return float(s), float(dist[k])

    def point_at(self, s: np.ndarray | float) -> np.ndarray:
        """Position at arc length ``s`` (clamped to the path)."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        x = np.interp(s, self.arc_length, self.waypoints[:, 0])
        y = np.interp(s, self.arc_length, self.waypoints[:, 1])
        return np.stack([x, y], axis=-1)


@dataclass(frozen=True)
class ContestedSpace:
    """Square region shared by both paths, described by its centre and half side."""

    center: tuple[float, float]
    half_extent: float

    def __post_init__(self) -> None:
        if not self.half_extent > 0.0:
            raise ValueError("half_extent must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def occupancy_length(self) -> float:
        """Distance travelled along a path between entering and leaving."""
        return 2.0 * self.half_extent

    def entry_arc_length(self, path: Path) -> float:
        """Arc length at which ``path`` enters this space (near edge)."""
        s_center, _ = path.foot_point(self.center)
        return s_center - self.half_extent

    def center_arc_length(self, path: Path) -> float:
        return path.foot_point(self.center)[0]


@dataclass(frozen=True)
class ProjectedState:
    """Distance to contested-space entry (m, positive before) and speed along the path (m/s)."""

    d: float
    v: float


@dataclass(frozen=True, eq=False)
class ProjectedTrack:
    """Timestamped projected states, stored column-wise."""

    t: np.ndarray
    d: np.ndarray
    v: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> tuple[float, ProjectedState]:
        return float(self.t[i]), ProjectedState(float(self.d[i]), float(self.v[i]))

    def __iter__(self) -> Iterator[tuple[float, ProjectedState]]:
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True, eq=False)
class DecodedTrack:
    t: np.ndarray
    xy: np.ndarray
    clamped: np.ndarray  # True where d fell outside the path and was clamped


def _finite_difference_speed(t: np.ndarray, d: np.ndarray) -> np.ndarray:
    v = np.empty_like(d)
    if len(d) == 1:
        v[:] = 0.0
        return v
    dt = np.diff(t)
    if np.any(dt <= 0.0):
        raise DegenerateObservationError("timestamps must be strictly increasing")
    back = -np.diff(d) / dt
    v[1:] = back
    v[0] = back[0]
    return v


def project_to_path(
    t: Sequence[float],
    xy: Sequence[Sequence[float]],
    path: Path,
    contested: ContestedSpace,
    tolerance: float = DEFAULT_LATERAL_TOLERANCE,
) -> ProjectedTrack:
    """Map a 2D track onto ``path`` as distance to the contested-space entry.

    Speeds come from backward differences of ``d`` (the first sample reuses
    the first difference).
    """
    t = np.asarray(t, dtype=float)
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if len(t) != len(xy):
        raise ValueError("t and xy lengths differ")
    s_entry = contested.entry_arc_length(path)
    d = np.empty(len(t))
    for i, p in enumerate(xy):
        s, lateral = path.foot_point(p)
        if lateral > tolerance:
            raise ProjectionError(
                f"point {i} at ({p[0]:.3f}, {p[1]:.3f}) is {lateral:.3f} m from the path "
                f"(tolerance {tolerance} m)"
            )
        d[i] = s_entry - s
    return ProjectedTrack(t, d, _finite_difference_speed(t, d))


def decode_to_2d(
    t: Sequence[float],
    d: Sequence[float],
    path: Path,
    contested: ContestedSpace,
) -> DecodedTrack:
    """Place distances-to-entry back onto ``path``; out-of-range values are clamped and flagged."""
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    s = contested.entry_arc_length(path) - d
    clamped = (s < 0.0) | (s > path.length)
    return DecodedTrack(t, path.point_at(s), clamped)


def initial_conditions(sample, t_pred: float | None = None, n_inputs: int = 2) -> tuple[ProjectedState, ProjectedState]:
    """Projected (ego, target) states from the last ``n_inputs`` observations at or before ``t_pred``.

    Position is the last observation; speed is the last finite difference.
    """
    states = []
    for agent in ("ego", "target"):
        t_obs, xy_obs = sample.observations(agent, t_pred, n_inputs)
        if t_obs[-1] - t_obs[0] <= 0.0:
            raise DegenerateObservationError(f"sample {sample.id}: zero-duration {agent} observation window")
        path = sample.ego_path if agent == "ego" else sample.target_path
        track = project_to_path(t_obs, xy_obs, path, sample.contested)
        states.append(ProjectedState(float(track.d[-1]), float(track.v[-1])))
    return states[0], states[1]


class SampleError(ValueError):
    """A sample violates one of its invariants."""


_TIME_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Track:
    """Recorded 2D positions of one agent on a uniform time grid."""

    t: np.ndarray
    xy: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.t, dtype=float)
        xy = np.array(self.xy, dtype=float).reshape(-1, 2)
        if len(t) != len(xy):
            raise SampleError("track times and positions differ in length")
        if len(t) < 2:
            raise SampleError("a track needs at least two observations")
        dt = np.diff(t)
        if np.any(dt <= 0.0):
            raise SampleError("track timestamps must be strictly increasing")
        if np.ptp(dt) > 1e-6 * max(1.0, float(dt.mean())):
            raise SampleError("track timestamps must be uniformly spaced")
        t.setflags(write=False)
        xy.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "xy", xy)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass(frozen=True, eq=False)
class Sample:
    """One recorded gap-acceptance interaction with its ground truth.

    Times are absolute seconds on the recording clock. ``t_A`` is the time
    the target reaches the contested space and is only present for accepted
    gaps; ``t_C`` is when the ego reaches it. ``t_open``, ``t_char`` and
    ``t_crit`` are the gap-opening, characteristic-gap and critical-decision
    evaluation timestamps (``nan`` when the dataset has none).
    """

    id: str
    ego: Track
    target: Track
    ego_path: Path
    target_path: Path
    contested: ContestedSpace
    a: int
    t_A: float
    t_C: float
    t_open: float = float("nan")
    t_char: float = float("nan")
    t_crit: float = float("nan")

    def __post_init__(self) -> None:
        if self.a not in (0, 1):
            raise SampleError(f"sample {self.id}: outcome a must be 0 or 1")
        if self.a == 1 and not np.isfinite(self.t_A):
            raise SampleError(f"sample {self.id}: accepted gap needs a finite t_A")
        if self.a == 0 and not np.isnan(self.t_A):
            raise SampleError(f"sample {self.id}: t_A must be absent for a rejected gap")
        if not np.isfinite(self.t_C):
            raise SampleError(f"sample {self.id}: t_C must be finite")
        for name, path in (("ego", self.ego_path), ("target", self.target_path)):
            s_c, lateral = path.foot_point(self.contested.center)
            h = self.contested.half_extent
            if lateral > h + _TIME_EPS:
                raise SampleError(f"sample {self.id}: {name} path misses the contested space")
            if s_c - h < -_TIME_EPS:
                raise SampleError(f"sample {self.id}: {name} path starts inside the contested space")
            if not (s_c - h - 1e-9 <= path.length <= s_c + h + 1e-9):
                raise SampleError(f"sample {self.id}: {name} path must terminate inside the contested space")

    def track(self, agent: str) -> Track:
        if agent == "ego":
            return self.ego
        if agent == "target":
            return self.target
        raise ValueError(f"unknown agent {agent!r}")

    def path(self, agent: str) -> Path:
        return self.ego_path if agent == "ego" else self.target_path

    def first_prediction_time(self, n_inputs: int = 2) -> float:
        """Earliest time at which both agents have ``n_inputs`` observations."""
        return float(max(self.ego.t[n_inputs - 1], self.target.t[n_inputs - 1]))

    @property
    def gap_opening_time(self) -> float:
        return self.t_open if np.isfinite(self.t_open) else self.first_prediction_time()

    @property
    def gap_size(self) -> float:
        """Time gap offered at gap opening (s)."""
        return self.t_C - self.gap_opening_time

    def observations(self, agent: str, t_pred: float | None = None, n_inputs: int = 2) -> tuple[np.ndarray, np.ndarray]:
        """The last ``n_inputs`` observations of ``agent`` at or before ``t_pred``."""
        tr = self.track(agent)
        if t_pred is None:
            t_pred = self.gap_opening_time
        k = int(np.searchsorted(tr.t, t_pred + _TIME_EPS, side="right"))
        if k < n_inputs:
            raise SampleError(f"sample {self.id}: fewer than {n_inputs} {agent} observations before t={t_pred}")
        return tr.t[k - n_inputs:k], tr.xy[k - n_inputs:k]

    def is_undecided_at(self, t_pred: float, n_inputs: int = 2) -> bool:
        """True if a prediction at ``t_pred`` is possible and neither agent has reached the conflict."""
        if not np.isfinite(t_pred) or t_pred + _TIME_EPS < self.first_prediction_time(n_inputs):
            return False
        first_entry = self.t_A if self.a == 1 else self.t_C
        return t_pred < first_entry
