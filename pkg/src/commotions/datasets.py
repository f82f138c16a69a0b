"""Dataset files, the synthetic gap-acceptance generator and train/test split construction.

A dataset directory holds four files:

``geometry.csv``
    ``sample_id,element,index,x,y,half_extent`` with ``element`` one of
    ``ego_path``, ``target_path`` (one row per waypoint, ``index`` ordering
    them) or ``contested`` (one row, centre in ``x,y``).
``trajectories.csv``
    ``sample_id,agent,t,x,y`` with ``agent`` in ``{ego, target}``.
``outcomes.csv``
    ``sample_id,a,t_A,t_C,t_open,t_char,t_crit``; empty cells mean absent.
``dataset.json``
    Metadata: name, timestep, characteristic and critical gap sizes and the
    generator settings when the data are synthetic.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from commotions.scenario import ContestedSpace, Path, Sample, SampleError, Track

GEOMETRY_FILE = "geometry.csv"
TRAJECTORY_FILE = "trajectories.csv"
OUTCOME_FILE = "outcomes.csv"
META_FILE = "dataset.json"

GEOMETRY_COLUMNS = ("sample_id", "element", "index", "x", "y", "half_extent")
TRAJECTORY_COLUMNS = ("sample_id", "agent", "t", "x", "y")
OUTCOME_COLUMNS = ("sample_id", "a", "t_A", "t_C", "t_open", "t_char", "t_crit")


class DatasetError(ValueError):
    """A dataset file violates the format or a sample invariant."""


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: tuple[Sample, ...]
    name: str = "dataset"
    timestep: float = 0.1
    characteristic_gap: float = float("nan")
    critical_gap: float = float("nan")
    generator: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise DatasetError("sample ids must be unique")
        for s in self.samples:
            for tr in (s.ego, s.target):
                if abs(tr.dt - self.timestep) > 1e-6:
                    raise DatasetError(f"sample {s.id}: timestep {tr.dt} differs from dataset timestep {self.timestep}")

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, i: int) -> Sample:
        return self.samples[i]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def by_id(self) -> dict[str, Sample]:
        return {s.id: s for s in self.samples}

    def subset(self, ids: Sequence[str]) -> list[Sample]:
        lookup = self.by_id()
        return [lookup[i] for i in ids]

    def metadata(self) -> dict:
        return {
            "name": self.name,
            "timestep": self.timestep,
            "characteristic_gap": None if math.isnan(self.characteristic_gap) else self.characteristic_gap,
            "critical_gap": None if math.isnan(self.critical_gap) else self.critical_gap,
            "generator": self.generator,
        }


# ---------------------------------------------------------------- file I/O


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def save_dataset(dataset: Dataset, directory: str | FsPath) -> None:
    """Write the four-file format; floats use ``repr`` so a reload is bit-identical."""
    out = FsPath(directory)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / GEOMETRY_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GEOMETRY_COLUMNS)
        for s in dataset.samples:
            for element, path in (("ego_path", s.ego_path), ("target_path", s.target_path)):
                for k, (x, y) in enumerate(path.waypoints):
                    w.writerow([s.id, element, k, _fmt(x), _fmt(y), ""])
            cx, cy = s.contested.center
            w.writerow([s.id, "contested", 0, _fmt(cx), _fmt(cy), _fmt(s.contested.half_extent)])
    with open(out / TRAJECTORY_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for s in dataset.samples:
            for agent in ("ego", "target"):
                tr = s.track(agent)
                for t, (x, y) in zip(tr.t, tr.xy):
                    w.writerow([s.id, agent, _fmt(t), _fmt(x), _fmt(y)])
    with open(out / OUTCOME_FILE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OUTCOME_COLUMNS)
        for s in dataset.samples:
            w.writerow([s.id, s.a, _fmt(s.t_A), _fmt(s.t_C), _fmt(s.t_open), _fmt(s.t_char), _fmt(s.t_crit)])
    with open(out / META_FILE, "w") as fh:
        json.dump(dataset.metadata(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_rows(path: FsPath, columns: Sequence[str]) -> list[tuple[int, dict]]:
    if not path.exists():
        raise DatasetError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise DatasetError(f"{path}: missing column(s) {', '.join(missing)}")
        return [(i + 2, row) for i, row in enumerate(reader)]


def _num(value: str, path: FsPath, line: int, column: str, required: bool = True) -> float:
    if value is None or value.strip() == "":
        if required:
            raise DatasetError(f"{path}, row {line}: {column} is required")
        return float("nan")
    try:
        return float(value)
    except ValueError:
        raise DatasetError(f"{path}, row {line}: {column}={value!r} is not a number") from None


def load_dataset(directory: str | FsPath) -> Dataset:
    """Read and validate a dataset directory."""
    root = FsPath(directory)
    meta = {}
    if (root / META_FILE).exists():
        with open(root / META_FILE) as fh:
            meta = json.load(fh)

    geo_path = root / GEOMETRY_FILE
    paths: dict[str, dict[str, list[tuple[int, float, float]]]] = defaultdict(lambda: defaultdict(list))
    contested: dict[str, ContestedSpace] = {}
    for line, row in _read_rows(geo_path, GEOMETRY_COLUMNS):
        sid, element = row["sample_id"], row["element"]
        x = _num(row["x"], geo_path, line, "x")
        y = _num(row["y"], geo_path, line, "y")
        if element == "contested":
            h = _num(row["half_extent"], geo_path, line, "half_extent")
            try:
                contested[sid] = ContestedSpace((x, y), h)
            except ValueError as exc:
                raise DatasetError(f"{geo_path}, row {line}: {exc}") from None
        elif element in ("ego_path", "target_path"):
            idx = int(_num(row["index"], geo_path, line, "index"))
            paths[sid][element].append((idx, x, y))
        else:
            raise DatasetError(f"{geo_path}, row {line}: unknown element {element!r}")

    traj_path = root / TRAJECTORY_FILE
    tracks: dict[str, dict[str, list[tuple[float, float, float]]]] = defaultdict(lambda: defaultdict(list))
    for line, row in _read_rows(traj_path, TRAJECTORY_COLUMNS):
        agent = row["agent"]
        if agent not in ("ego", "target"):
            raise DatasetError(f"{traj_path}, row {line}: agent must be ego or target")
        tracks[row["sample_id"]][agent].append((
            _num(row["t"], traj_path, line, "t"),
            _num(row["x"], traj_path, line, "x"),
            _num(row["y"], traj_path, line, "y"),
        ))

    out_path = root / OUTCOME_FILE
    samples = []
    seen = set()
    for line, row in _read_rows(out_path, OUTCOME_COLUMNS):
        sid = row["sample_id"]
        if sid in seen:
            raise DatasetError(f"{out_path}, row {line}: duplicate sample id {sid!r}")
        seen.add(sid)
        where = f"{out_path}, row {line}"
        if sid not in contested or "ego_path" not in paths[sid] or "target_path" not in paths[sid]:
            raise DatasetError(f"{where}: geometry for sample {sid!r} is incomplete in {geo_path}")
        if "ego" not in tracks[sid] or "target" not in tracks[sid]:
            raise DatasetError(f"{where}: trajectories for sample {sid!r} are incomplete in {traj_path}")
        try:
            geo = {k: Path(np.array([(x, y) for _, x, y in sorted(v)])) for k, v in paths[sid].items()}
            trk = {}
            for agent, rows in tracks[sid].items():
                arr = np.array(sorted(rows))
                trk[agent] = Track(arr[:, 0], arr[:, 1:])
            a_raw = _num(row["a"], out_path, line, "a")
            if a_raw not in (0.0, 1.0):
                raise SampleError("a must be 0 or 1")
            samples.append(Sample(
                id=sid, ego=trk["ego"], target=trk["target"],
                ego_path=geo["ego_path"], target_path=geo["target_path"], contested=contested[sid],
                a=int(a_raw),
                t_A=_num(row["t_A"], out_path, line, "t_A", required=False),
                t_C=_num(row["t_C"], out_path, line, "t_C"),
                t_open=_num(row["t_open"], out_path, line, "t_open", required=False),
                t_char=_num(row["t_char"], out_path, line, "t_char", required=False),
                t_crit=_num(row["t_crit"], out_path, line, "t_crit", required=False),
            ))
        except (SampleError, ValueError) as exc:
            if isinstance(exc, DatasetError):
                raise
            raise DatasetError(f"{where}: {exc}") from None

    timestep = meta.get("timestep")
    if timestep is None:
        timestep = samples[0].ego.dt if samples else 0.1
    return Dataset(
        samples=tuple(samples),
        name=meta.get("name", root.name),
        timestep=float(timestep),
        characteristic_gap=float(meta.get("characteristic_gap") or "nan"),
        critical_gap=float(meta.get("critical_gap") or "nan"),
        generator=meta.get("generator", {}) or {},
    )


# ------------------------------------------------------- synthetic generator


@dataclass(frozen=True)
class SynthConfig:
    """Settings of the synthetic perpendicular-intersection generator.

    The target accepts iff the gap it perceives, ``G * exp(eps)`` with
    ``eps ~ N(0, perception_sd^2)``, exceeds a personal threshold drawn from a
    lognormal with median ``threshold_median`` and log-sd ``threshold_sd``.
    """

    n: int = 400
    seed: int = 0
    dt: float = 0.1
    half_extent: float = 2.5
    approach_length: float = 200.0
    ego_speed: tuple[float, float] = (8.0, 14.0)
    gap: tuple[float, float] = (2.0, 9.0)
    target_speed: tuple[float, float] = (5.0, 10.0)
    target_time_to_entry: tuple[float, float] = (2.0, 5.0)
    threshold_median: float = 4.5
    threshold_sd: float = 0.25
    perception_sd: float = 0.1
    accept_accel: tuple[float, float] = (0.0, 1.5)
    accept_margin: float = 1.0
    max_accel: float = 4.0
    stop_buffer: tuple[float, float] = (0.5, 2.0)
    reaction: tuple[float, float] = (0.5, 1.5)
    resume_accel: float = 2.0
    characteristic_gap: float = 3.0
    critical_gap: float = 1.5

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.dt <= 0 or self.half_extent <= 0:
            raise ValueError("dt and half_extent must be positive")
        for name in ("ego_speed", "gap", "target_speed", "target_time_to_entry", "accept_accel",
                     "stop_buffer", "reaction"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi")
        if self.ego_speed[0] <= 0 or self.target_speed[0] <= 0 or self.resume_accel <= 0:
            raise ValueError("speeds and the resume acceleration must be positive")
        if self.threshold_median <= 0 or self.threshold_sd < 0 or self.perception_sd < 0:
            raise ValueError("threshold median must be positive and spreads non-negative")

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()})


def acceptance_probability(gap: np.ndarray | float, config: SynthConfig) -> np.ndarray:
    """Probability that the generator's decision rule accepts a gap of ``gap`` seconds."""
    g = np.asarray(gap, dtype=float)
    spread = math.hypot(config.threshold_sd, config.perception_sd)
    z = np.log(g) - math.log(config.threshold_median)
    if spread == 0.0:
        return (z > 0).astype(float)
    return ndtr(z / spread)


def _accept_motion(d0, v0, a):
    """Distance-to-entry function for constant acceleration ``a`` from ``(d0, v0)``."""
    return lambda tau: d0 - v0 * tau - 0.5 * a * tau * tau


def _time_to_cover(dist, v0, a):
    if a == 0.0:
        return dist / v0
    return (-v0 + math.sqrt(v0 * v0 + 2.0 * a * dist)) / a


def _yield_motion(d0, v0, b, t_go, a_go):
    """Brake at ``b`` until stopped (or until ``t_go``), hold, then accelerate at ``a_go`` from ``t_go``."""
    t_stop = v0 / b
    t_brake = min(t_stop, t_go)

    def d_of(tau):
        tau = np.asarray(tau, dtype=float)
        tb = np.minimum(tau, t_brake)
        d = d0 - v0 * tb + 0.5 * b * tb * tb
        v_b = v0 - b * t_brake
        tg = np.maximum(tau - t_go, 0.0)
        return d - v_b * np.maximum(np.minimum(tau, t_go) - t_brake, 0.0) - v_b * tg - 0.5 * a_go * tg * tg

    d_go = d0 - v0 * t_brake + 0.5 * b * t_brake * t_brake
    v_go = v0 - b * t_brake
    return d_of, d_go, v_go


def synth_generate(config: SynthConfig, name: str = "synthetic") -> Dataset:
    """Perpendicular-intersection samples with a known stochastic acceptance rule.

    The ego drives east at constant speed; the target approaches from the
    south. Both are observed at ``t = 0`` and ``t = dt``, and the gap opens
    at ``t = dt`` with the ego ``G`` seconds from the contested space.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    h = config.half_extent
    length = 2.0 * h
    ego_path = Path(np.array([[-config.approach_length, 0.0], [h, 0.0]]))
    target_path = Path(np.array([[0.0, -config.approach_length], [0.0, h]]))
    contested = ContestedSpace((0.0, 0.0), h)
    dt = config.dt
    t_open = dt
    samples = []
    n_flipped = 0
    width = len(str(config.n - 1))
    for i in range(config.n):
        v_e = rng.uniform(*config.ego_speed)
        gap = rng.uniform(*config.gap)
        v_t = rng.uniform(*config.target_speed)
        d_t = v_t * rng.uniform(*config.target_time_to_entry)
        threshold = config.threshold_median * math.exp(config.threshold_sd * rng.standard_normal())
        perceived = gap * math.exp(config.perception_sd * rng.standard_normal())
        a_pref = rng.uniform(*config.accept_accel)
        stop_buffer = rng.uniform(*config.stop_buffer)
        reaction = rng.uniform(*config.reaction)

        accept = perceived > threshold
        if accept:
            window = gap - config.accept_margin
            if window <= 0.0:
                accept = False
            else:
                a_req = 2.0 * (d_t - v_t * window) / (window * window)
                a_acc = max(a_pref, a_req)
                if a_acc > config.max_accel:
                    accept = False
            if not accept:
                n_flipped += 1

        t_C = t_open + gap
        ego_exit = t_C + length / v_e
        if accept:
            d_fn = _accept_motion(d_t, v_t, a_acc)
            tau_in = _time_to_cover(d_t, v_t, a_acc)
            tau_out = _time_to_cover(d_t + length, v_t, a_acc)
            t_A = t_open + tau_in
        else:
            b = v_t * v_t / (2.0 * max(d_t - stop_buffer, 1e-3))
            tau_go = ego_exit + reaction - t_open
            d_fn, d_go, v_go = _yield_motion(d_t, v_t, b, tau_go, config.resume_accel)
            tau_out = tau_go + _time_to_cover(d_go + length, v_go, config.resume_accel)
            t_A = float("nan")

        # each track ends at the first sample after that agent leaves the contested space
        t_target = dt * np.arange(int(math.ceil((t_open + tau_out) / dt - 1e-9)) + 1)
        t_ego = dt * np.arange(int(math.ceil(ego_exit / dt - 1e-9)) + 1)
        tau = t_target - t_open
        d_target = np.where(tau >= 0.0, d_fn(np.maximum(tau, 0.0)), d_t - v_t * tau)
        d_ego = v_e * (t_C - t_ego)
        s_e = ego_path.length - length - d_ego  # arc length = entry arc length - distance
        s_t = target_path.length - length - d_target
        ego_xy = np.column_stack([s_e - config.approach_length, np.zeros_like(s_e)])
        target_xy = np.column_stack([np.zeros_like(s_t), s_t - config.approach_length])

        t_char = t_C - config.characteristic_gap
        t_crit = t_C - config.critical_gap
        samples.append(Sample(
            id=f"s{i:0{width}d}",
            ego=Track(t_ego, ego_xy), target=Track(t_target, target_xy),
            ego_path=ego_path, target_path=target_path, contested=contested,
            a=int(accept), t_A=float(t_A), t_C=float(t_C), t_open=float(t_open),
            t_char=float(t_char) if t_char >= t_open else float("nan"),
            t_crit=float(t_crit) if t_crit >= t_open else float("nan"),
        ))
    gen = config.to_dict()
    gen["flipped_infeasible_accepts"] = n_flipped
    return Dataset(tuple(samples), name=name, timestep=dt, characteristic_gap=config.characteristic_gap,
                   critical_gap=config.critical_gap, generator=gen)


# ------------------------------------------------------------------ splits


@dataclass(frozen=True)
class Split:
    kind: str  # "random" or "critical"
    index: int
    train: tuple[str, ...]
    test: tuple[str, ...]

    @property
    def name(self) -> str:
        return "critical" if self.kind == "critical" else f"random_{self.index}"


@dataclass(frozen=True)
class SplitPlan:
    splits: tuple[Split, ...]
    test_fraction: float
    seed: int

    @property
    def random(self) -> list[Split]:
        return [s for s in self.splits if s.kind == "random"]

    @property
    def critical(self) -> Split:
        return next(s for s in self.splits if s.kind == "critical")

    def to_dict(self) -> dict:
        return {"test_fraction": self.test_fraction, "seed": self.seed,
                "splits": [{"kind": s.kind, "index": s.index, "train": list(s.train), "test": list(s.test)}
                           for s in self.splits]}

    @classmethod
    def from_dict(cls, data: dict) -> "SplitPlan":
        return cls(tuple(Split(s["kind"], s["index"], tuple(s["train"]), tuple(s["test"])) for s in data["splits"]),
                   data["test_fraction"], data["seed"])


def critical_ranking(samples: Sequence[Sample]) -> list[str]:
    """Sample ids from most to least extreme: smallest accepted and largest rejected gaps alternate."""
    acc = sorted((s for s in samples if s.a == 1), key=lambda s: (s.gap_size, s.id))
    rej = sorted((s for s in samples if s.a == 0), key=lambda s: (-s.gap_size, s.id))
    order = []
    for k in range(max(len(acc), len(rej))):
        if k < len(acc):
            order.append(acc[k].id)
        if k < len(rej):
            order.append(rej[k].id)
    return order


def make_splits(dataset: Dataset, n_random: int = 10, test_fraction: float = 0.2, seed: int = 0) -> SplitPlan:
    """``n_random`` stratified random splits followed by the critical split."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    ids = sorted(dataset.ids)
    labels = {s.id: s.a for s in dataset.samples}
    classes = {c: [i for i in ids if labels[i] == c] for c in (0, 1)}
    for c, members in classes.items():
        if len(members) < 2:
            raise ValueError(f"need at least two samples with a={c} to split, found {len(members)}")
    n_test = int(round(test_fraction * len(ids)))
    n_test = min(max(n_test, 2), len(ids) - 2)
    # per-class test counts proportional to class size, rounding to keep the total exact
    n1 = int(round(n_test * len(classes[1]) / len(ids)))
    n1 = min(max(n1, 1), len(classes[1]) - 1)
    n0 = n_test - n1
    if not 1 <= n0 <= len(classes[0]) - 1:
        raise ValueError("too few samples in a class for the requested test fraction")
    rng = np.random.Generator(np.random.PCG64(seed))
    splits = []
    for k in range(n_random):
        test = set(rng.permutation(classes[0])[:n0].tolist()) | set(rng.permutation(classes[1])[:n1].tolist())
        splits.append(Split("random", k, tuple(i for i in ids if i not in test), tuple(sorted(test))))
    crit = set(critical_ranking(dataset.samples)[:n_test])
    splits.append(Split("critical", n_random, tuple(i for i in ids if i not in crit), tuple(sorted(crit))))
    return SplitPlan(tuple(splits), test_fraction, seed)
