"""Loss functions and Gaussian-process Bayesian optimisation of the model parameters."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

from commotions.model.core import PARAM_NAMES, ModelParams, SimConfig
from commotions.model.simulate import RolloutSet, make_job, simulate_jobs
from commotions.prediction import VARIANCE_CAP
from commotions.scenario import Sample

log = logging.getLogger(__name__)

BINARY_WEIGHT = 4.0
NONFINITE_PENALTY = 1.0e10


class LossKind(str, Enum):
    L1 = "L1"
    L2 = "L2"


class ClipMode(str, Enum):
    """Which side of the time term is clipped to ``[t_C, t_A]``.

    ``REFERENCE`` clips the ground-truth reference around each predicted time
    (a rejected gap costs nothing when the target is predicted to go after
    the ego). ``PREDICTION`` clips the predicted time and compares it with
    ``t_A`` (accepted) or ``t_C`` (rejected).
    """

    REFERENCE = "reference"
    PREDICTION = "prediction"


@dataclass(frozen=True)
class Truth:
    sample_id: str
    a: int
    t_A: float
    t_C: float

    def __post_init__(self) -> None:
        if self.t_C is None or not np.isfinite(self.t_C):
            raise ValueError(f"sample {self.sample_id}: t_C is required")
        if self.a == 1 and not np.isfinite(self.t_A):
            raise ValueError(f"sample {self.sample_id}: accepted gap needs t_A")

    @classmethod
    def of(cls, sample: Sample) -> "Truth":
        return cls(sample.id, sample.a, sample.t_A, sample.t_C)


def _outcomes_and_times(pred) -> tuple[str, np.ndarray, np.ndarray]:
    if isinstance(pred, RolloutSet):
        return pred.sample_id, pred.accepted.astype(float), pred.acceptance_times
    return pred.sample_id, np.asarray(pred.outcomes, dtype=float), np.asarray(pred.acceptance_times, dtype=float)


def time_targets(truth: Truth, t_pred: np.ndarray, clip: ClipMode = ClipMode.REFERENCE) -> tuple[np.ndarray, np.ndarray]:
    """The two sides ``(reference, prediction)`` of the squared time term."""
    t_pred = np.asarray(t_pred, dtype=float)
    upper = truth.t_A if truth.a == 1 else np.inf  # no upper clip without an acceptance time
    clipped = np.minimum(upper, np.maximum(truth.t_C, t_pred))
    if ClipMode(clip) is ClipMode.REFERENCE:
        return clipped, t_pred
    reference = truth.t_A if truth.a == 1 else truth.t_C
    return np.full_like(t_pred, reference), clipped


def sample_l1(outcomes: np.ndarray, times: np.ndarray, truth: Truth, clip: ClipMode = ClipMode.REFERENCE) -> float:
    """Mean over rollouts of ``4 |a - a_p| + (time difference)^2`` for one sample."""
    ref, pred = time_targets(truth, times, clip)
    return float(np.mean(BINARY_WEIGHT * np.abs(truth.a - outcomes) + (ref - pred) ** 2))


def capped_variance(times: np.ndarray) -> float:
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        return 0.0
    return min(float(np.var(times, ddof=1)), VARIANCE_CAP)


def regularizer(v) -> np.ndarray | float:
    """Variance regulariser ``100 V - 20 sqrt(V) + 1``, i.e. ``(10 sqrt(V) - 1)^2``."""
    v = np.asarray(v, dtype=float)
    out = 100.0 * v - 20.0 * np.sqrt(v) + 1.0
    return float(out) if out.ndim == 0 else out


def _align(predictions, truths) -> list[tuple]:
    if isinstance(predictions, Mapping):
        predictions = list(predictions.values())
    if isinstance(truths, Mapping):
        truths = list(truths.values())
    truths = [t if isinstance(t, Truth) else Truth.of(t) for t in truths]
    by_id = {t.sample_id: t for t in truths}
    if len(by_id) != len(predictions):
        raise ValueError("predictions and truths must cover the same samples")
    rows = []
    for p in predictions:
        sid, outcomes, times = _outcomes_and_times(p)
        if sid not in by_id:
            raise ValueError(f"no ground truth for sample {sid!r}")
        rows.append((by_id[sid], outcomes, times))
    return rows


def loss_l1(predictions, truths, clip: ClipMode = ClipMode.REFERENCE) -> float:
    """Sum over samples of the mean binary and squared-time errors of the rollouts."""
    return float(sum(sample_l1(o, t, tr, clip) for tr, o, t in _align(predictions, truths)))


def loss_l2(predictions, truths, clip: ClipMode = ClipMode.REFERENCE) -> float:
    """``loss_l1`` plus the variance regulariser, which vanishes when every capped variance is 0.01."""
    rows = _align(predictions, truths)
    l1 = sum(sample_l1(o, t, tr, clip) for tr, o, t in rows)
    return float(l1 + sum(regularizer(capped_variance(t)) for _, _, t in rows))


# ------------------------------------------------------------------ design


def latin_hypercube(bounds, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points with exactly one point per stratum in every dimension."""
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if n < 1:
        raise ValueError("n must be at least 1")
    unit = qmc.LatinHypercube(d=len(bounds), rng=rng).random(n)
    return qmc.scale(unit, bounds[:, 0], bounds[:, 1]) if n else unit


# ------------------------------------------------------------ optimisation


@dataclass
class FitResult:
    names: tuple[str, ...]
    bounds: np.ndarray
    best_x: np.ndarray
    best_loss: float
    trace_x: np.ndarray
    trace_loss: np.ndarray
    stages: list[int] = field(default_factory=list)  # stage index per trace entry
    info: dict = field(default_factory=dict)

    @property
    def incumbent(self) -> np.ndarray:
        return np.minimum.accumulate(self.trace_loss)

    def params(self) -> ModelParams:
        bounds = {n: tuple(b) for n, b in zip(self.names, self.bounds.tolist())}
        return ModelParams.from_array(self.best_x, bounds)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "bounds": self.bounds.tolist(),
            "best_x": self.best_x.tolist(),
            "best_loss": self.best_loss,
            "trace": [{"x": x.tolist(), "loss": float(l), "stage": int(s)}
                      for x, l, s in zip(self.trace_x, self.trace_loss, self.stages)],
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        trace = data["trace"]
        return cls(tuple(data["names"]), np.array(data["bounds"], dtype=float), np.array(data["best_x"], dtype=float),
                   float(data["best_loss"]), np.array([t["x"] for t in trace], dtype=float),
                   np.array([t["loss"] for t in trace], dtype=float), [t["stage"] for t in trace],
                   data.get("info", {}))


def _expected_improvement(mu, sd, best):
    sd = np.maximum(sd, 1e-12)
    z = (best - mu) / sd
    return (best - mu) * ndtr(z) + sd * np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def _fit_surrogate(X, y, rng, previous=None):
    """GP surrogate; later fits start from the previous hyperparameters instead of random restarts."""
    from sklearn.gaussian_process import GaussianProcessRegressor
    from sklearn.gaussian_process.kernels import ConstantKernel, Matern, WhiteKernel

    d = X.shape[1]
    if previous is None:
        kernel = (ConstantKernel(1.0, (1e-3, 1e3)) * Matern(np.full(d, 0.5), (1e-2, 1e2), nu=2.5)
                  + WhiteKernel(1e-4, (1e-10, 1e0)))
    else:
        kernel = previous.kernel_
    gp = GaussianProcessRegressor(kernel=kernel, normalize_y=True,
                                  n_restarts_optimizer=2 if previous is None else 0,
                                  random_state=int(rng.integers(2**31 - 1)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        gp.fit(X, y)
    return gp


def _maximize_ei(gp, best, d, rng, n_random=2000, n_polish=3):
    cand = rng.random((n_random, d))
    mu, sd = gp.predict(cand, return_std=True)
    ei = _expected_improvement(mu, sd, best)
    order = np.argsort(-ei)[:n_polish]
    best_x, best_ei = cand[order[0]], ei[order[0]]

    def neg_ei(x):
        m, s = gp.predict(x[None], return_std=True)
        return -float(_expected_improvement(m, s, best)[0])

    for k in order:
        res = minimize(neg_ei, cand[k], method="L-BFGS-B", bounds=[(0.0, 1.0)] * d,
                       options={"maxiter": 50})
        if res.success and -res.fun > best_ei:
            best_x, best_ei = np.clip(res.x, 0.0, 1.0), -res.fun
    return best_x


def bayes_opt(
    objective: Callable[[np.ndarray], float],
    bounds,
    budget: int,
    rng: np.random.Generator,
    n_init: int | None = None,
    names: Sequence[str] | None = None,
    stage: int = 0,
) -> FitResult:
    """Minimise ``objective`` over the box ``bounds`` with ``budget`` evaluations.

    A Latin-hypercube design of ``n_init`` points is followed by
    expected-improvement acquisitions on a Matern-5/2 Gaussian process fitted
    in the unit cube to standardised losses. Non-finite losses are recorded
    as a large penalty.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    d = len(bounds)
    if budget < d + 1:
        raise ValueError(f"budget must be at least dimension + 1 = {d + 1}")
    if n_init is None:
        n_init = min(budget, max(d + 1, int(round(0.4 * budget))))
    n_init = min(max(n_init, 1), budget)
    lo, span = bounds[:, 0], bounds[:, 1] - bounds[:, 0]

    def evaluate(u):
        x = lo + np.clip(u, 0.0, 1.0) * span
        x = np.clip(x, bounds[:, 0], bounds[:, 1])
        val = float(objective(x))
        if not np.isfinite(val):
            val = NONFINITE_PENALTY
        return x, val

    U = qmc.LatinHypercube(d=d, rng=rng).random(n_init)
    xs, ys = [], []
    for u in U:
        x, y = evaluate(u)
        xs.append(x)
        ys.append(y)
        log.debug("init %d/%d loss=%.6g", len(ys), n_init, y)
    gp = None
    for it in range(budget - n_init):
        X = (np.array(xs) - lo) / span
        y = np.array(ys)
        finite = y < NONFINITE_PENALTY
        y_fit = np.where(finite, y, y[finite].max() if finite.any() else 0.0)
        try:
            if np.ptp(y_fit) == 0.0:
                raise ValueError("constant observations")
            gp = _fit_surrogate(X, y_fit, rng, gp)
            u = _maximize_ei(gp, y_fit.min(), d, rng)
        except Exception as exc:  # surrogate trouble: explore at random this round
            if not (isinstance(exc, ValueError) and str(exc) == "constant observations"):
                warnings.warn(f"surrogate fit failed ({exc}); using a random point", RuntimeWarning, stacklevel=2)
            u = rng.random(d)
        x, val = evaluate(u)
        xs.append(x)
        ys.append(val)
        log.debug("acq %d/%d loss=%.6g best=%.6g", it + 1, budget - n_init, val, min(ys))
    trace_x = np.array(xs)
    trace_y = np.array(ys)
    k = int(np.argmin(trace_y))
    return FitResult(tuple(names or (f"x{i}" for i in range(d))), bounds, trace_x[k].copy(), float(trace_y[k]),
                     trace_x, trace_y, [stage] * len(trace_y))


# ---------------------------------------------------------------- fitting


@dataclass(frozen=True)
class FitSchedule:
    """1O (``two_stage=False``) or 2O with stage-2 bounds shrunk by ``shrink`` around the stage-1 optimum."""

    two_stage: bool = False
    n_init: int = 40
    n_iter: int = 60
    shrink: float = 0.25

    def __post_init__(self) -> None:
        if not 0.0 < self.shrink <= 1.0:
            raise ValueError("shrink must be in (0, 1]")
        if self.n_init < 1 or self.n_iter < 0:
            raise ValueError("invalid budget")

    @property
    def budget(self) -> int:
        return self.n_init + self.n_iter


def shrink_bounds(bounds, center, factor: float) -> np.ndarray:
    """Scale each side of the box toward ``center`` by ``factor``; ``factor = 1`` returns ``bounds``."""
    bounds = np.asarray(bounds, dtype=float)
    if factor >= 1.0:
        return bounds.copy()
    center = np.clip(np.asarray(center, dtype=float), bounds[:, 0], bounds[:, 1])
    lo = center - factor * (center - bounds[:, 0])
    hi = center + factor * (bounds[:, 1] - center)
    # keep a non-degenerate box when the centre sits on a bound
    width = factor * (bounds[:, 1] - bounds[:, 0])
    lo = np.where(hi - lo <= 0.0, np.maximum(bounds[:, 0], center - 0.5 * width), lo)
    hi = np.where(hi - lo <= 0.0, np.minimum(bounds[:, 1], center + 0.5 * width), hi)
    return np.column_stack([np.maximum(lo, bounds[:, 0]), np.minimum(hi, bounds[:, 1])])


class LossCache:
    """Per-sample loss terms keyed by parameter vector, shared between fits with the same settings.

    With common random numbers a sample's rollouts depend only on the
    parameters, so training sets that overlap reuse each other's work.
    """

    def __init__(self) -> None:
        self._store: dict[tuple, tuple[float, float]] = {}
        self.hits = 0
        self.misses = 0

    def get(self, key):
        val = self._store.get(key)
        if val is None:
            self.misses += 1
        else:
            self.hits += 1
        return val

    def put(self, key, value) -> None:
        self._store[key] = value

    def __len__(self) -> int:
        return len(self._store)


def training_time(sample: Sample) -> float:
    """Prediction time used for fitting: the gap opening."""
    return sample.gap_opening_time


def make_objective(
    samples: Sequence[Sample],
    config: SimConfig,
    loss: LossKind,
    n_p: int,
    seed: int,
    clip: ClipMode = ClipMode.REFERENCE,
    workers: int | None = None,
    cache: LossCache | None = None,
    t_preds: Sequence[float] | None = None,
) -> Callable[[np.ndarray], float]:
    """Loss of a parameter vector over ``samples`` under fixed simulation seed (common random numbers)."""
    loss = LossKind(loss)
    clip = ClipMode(clip)
    if t_preds is None:
        t_preds = [training_time(s) for s in samples]
    jobs = [make_job(s, t) for s, t in zip(samples, t_preds)]
    truths = [Truth.of(s) for s in samples]
    header = (repr(config.to_dict()), n_p, seed, clip.value)

    def objective(theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        key_theta = theta.tobytes()
        terms = [None] * len(jobs)
        todo = []
        for i, job in enumerate(jobs):
            if cache is not None:
                terms[i] = cache.get((header, key_theta, job.sample_id, job.t0))
            if terms[i] is None:
                todo.append(i)
        if todo:
            results = simulate_jobs([jobs[i] for i in todo], theta, config, n_p, seed, workers=workers)
            for i, rs in zip(todo, results):
                val = (sample_l1(rs.accepted.astype(float), rs.acceptance_times, truths[i], clip),
                       capped_variance(rs.acceptance_times))
                terms[i] = val
                if cache is not None:
                    cache.put((header, key_theta, jobs[i].sample_id, jobs[i].t0), val)
        total = sum(t[0] for t in terms)
        if loss is LossKind.L2:
            total += sum(regularizer(t[1]) for t in terms)
        return float(total)

    return objective


def fit(
    samples: Sequence[Sample],
    config: SimConfig,
    loss: LossKind = LossKind.L2,
    schedule: FitSchedule = FitSchedule(),
    seed: int = 0,
    n_p: int = 100,
    bounds: Mapping[str, tuple[float, float]] | None = None,
    clip: ClipMode = ClipMode.REFERENCE,
    workers: int | None = None,
    cache: LossCache | None = None,
) -> FitResult:
    """Fit the model parameters to ``samples`` by Bayesian optimisation (one or two stages)."""
    if len(samples) == 0:
        raise ValueError("the training split is empty")
    base = ModelParams() if bounds is None else ModelParams(bounds=dict(bounds))
    box = base.bounds_array()
    objective = make_objective(samples, config, loss, n_p, seed, clip, workers, cache)
    rng = np.random.Generator(np.random.PCG64(seed))
    res = bayes_opt(objective, box, schedule.budget, rng, schedule.n_init, PARAM_NAMES, stage=0)
    stage_bounds = [box.tolist()]
    if schedule.two_stage:
        box2 = shrink_bounds(box, res.best_x, schedule.shrink)
        stage_bounds.append(box2.tolist())
        res2 = bayes_opt(objective, box2, schedule.budget, rng, schedule.n_init, PARAM_NAMES, stage=1)
        trace_x = np.vstack([res.trace_x, res2.trace_x])
        trace_y = np.concatenate([res.trace_loss, res2.trace_loss])
        k = int(np.argmin(trace_y))
        res = FitResult(PARAM_NAMES, box, trace_x[k].copy(), float(trace_y[k]), trace_x, trace_y,
                        res.stages + res2.stages)
    res.info = {
        "loss": LossKind(loss).value,
        "clip": ClipMode(clip).value,
        "two_stage": schedule.two_stage,
        "n_init": schedule.n_init,
        "n_iter": schedule.n_iter,
        "shrink": schedule.shrink,
        "n_p": n_p,
        "seed": seed,
        "n_samples": len(samples),
        "stage_bounds": stage_bounds,
        "config": config.to_dict(),
    }
    return res
