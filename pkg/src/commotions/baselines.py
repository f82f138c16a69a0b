"""Reference predictors: L2-regularised logistic regression on 1D or 2D features, and constant velocity."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from commotions.scenario import Sample, decode_to_2d, initial_conditions

DEFAULT_GAP_CAP = 20.0  # s
PROB_EPS = 1e-12


class FeatureSchema(str, Enum):
    ONE_D = "1D"
    TWO_D = "2D"


def feature_length(schema: FeatureSchema, n_inputs: int = 2) -> int:
    if FeatureSchema(schema) is FeatureSchema.ONE_D:
        return 5
    return 2 * (2 * n_inputs + 2)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    schema: FeatureSchema

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "schema", FeatureSchema(self.schema))


def featurize(
    sample: Sample,
    schema: FeatureSchema | str,
    t_pred: float | None = None,
    n_inputs: int = 2,
    gap_cap: float = DEFAULT_GAP_CAP,
) -> FeatureVector:
    """Features of ``sample`` observed up to ``t_pred``.

    1D: projected ego distance and speed, target distance and speed, and the
    ego's time to the contested space (capped at ``gap_cap``). 2D: the last
    ``n_inputs`` raw positions of both agents followed by their velocity
    components from the final difference.
    """
    schema = FeatureSchema(schema)
    if schema is FeatureSchema.ONE_D:
        ego, target = initial_conditions(sample, t_pred, n_inputs)
        gap = ego.d / ego.v if ego.v > 0 else gap_cap
        gap = float(np.clip(gap, -gap_cap, gap_cap))
        return FeatureVector(np.array([ego.d, ego.v, target.d, target.v, gap]), schema)
    parts = []
    vels = []
    for agent in ("ego", "target"):
        t, xy = sample.observations(agent, t_pred, n_inputs)
        parts.append(xy.ravel())
        vels.append((xy[-1] - xy[-2]) / (t[-1] - t[-2]))
    return FeatureVector(np.concatenate(parts + vels), schema)


def feature_matrix(samples, schema, t_preds=None, n_inputs: int = 2) -> np.ndarray:
    if t_preds is None:
        t_preds = [None] * len(samples)
    return np.array([featurize(s, schema, t, n_inputs).values for s, t in zip(samples, t_preds)])


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class LRModel:
    """Logistic regression on standardised features; ``weights[0]`` is the bias."""

    weights: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    schema: FeatureSchema
    trace: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if np.any(np.asarray(self.scale) <= 0):
            raise ValueError("feature scales must be positive")

    def to_dict(self) -> dict:
        return {"schema": self.schema.value, "weights": self.weights.tolist(),
                "mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "LRModel":
        return cls(np.array(data["weights"]), np.array(data["mean"]), np.array(data["scale"]),
                   FeatureSchema(data["schema"]))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def penalized_nll(w: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    """Negative log-likelihood plus ``lam/2 * |w[1:]|^2`` (bias unpenalised); ``X`` includes the bias column."""
    z = X @ w
    nll = np.sum(np.logaddexp(0.0, z) - y * z)
    return float(nll + 0.5 * lam * np.dot(w[1:], w[1:]))


def lr_fit(
    features: np.ndarray,
    labels: np.ndarray,
    lam: float = 1.0,
    schema: FeatureSchema | str = FeatureSchema.ONE_D,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LRModel:
    """Fit by iteratively reweighted least squares (damped Newton) to gradient norm ``tol``."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("features must be (n, k) with one label per row")
    if len(y) < 2 or y.min() == y.max():
        raise ValueError("need at least two samples covering both classes")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale <= 1e-12] = 1.0
    Z = np.column_stack([np.ones(len(X)), (X - mean) / scale])
    k = Z.shape[1]
    pen = np.full(k, lam)
    pen[0] = 0.0
    w = np.zeros(k)
    obj = penalized_nll(w, Z, y, lam)
    trace = [obj]
    for _ in range(max_iter):
        p = _sigmoid(Z @ w)
        grad = Z.T @ (p - y) + pen * w
        if np.linalg.norm(grad) < tol:
            return LRModel(w, mean, scale, FeatureSchema(schema), tuple(trace))
        s = p * (1.0 - p)
        hess = (Z * s[:, None]).T @ Z + np.diag(pen) + 1e-12 * np.eye(k)
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while True:
            w_new = w - t * step
            obj_new = penalized_nll(w_new, Z, y, lam)
            # near the optimum the true decrease drops below the objective's rounding error
            if obj_new <= obj + 1e-13 * max(1.0, abs(obj)) or t < 1e-10:
                break
            t *= 0.5
        w, obj = w_new, min(obj_new, obj)
        trace.append(obj)
    raise ConvergenceError(f"IRLS did not reach gradient norm {tol} in {max_iter} iterations", trace)


def lr_predict(model: LRModel, features: np.ndarray, schema: FeatureSchema | str | None = None) -> np.ndarray:
    """Acceptance probabilities in ``(eps, 1 - eps)``."""
    if schema is not None and FeatureSchema(schema) is not model.schema:
        raise ValueError(f"model expects {model.schema.value} features, got {FeatureSchema(schema).value}")
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if X.shape[1] != len(model.mean):
        raise ValueError(f"model expects {len(model.mean)} features, got {X.shape[1]}")
    z = model.weights[0] + ((X - model.mean) / model.scale) @ model.weights[1:]
    return np.clip(_sigmoid(z), PROB_EPS, 1.0 - PROB_EPS)


def cv_score(sample: Sample, t_pred: float | None = None, n_inputs: int = 2) -> float:
    """1 if the target, held at its current speed, reaches the contested space before the ego, else 0."""
    ego, target = initial_conditions(sample, t_pred, n_inputs)
    t_ego = ego.d / ego.v if ego.v > 0 else np.inf
    t_target = target.d / target.v if target.v > 0 else np.inf
    if ego.d <= 0:
        t_ego = 0.0
    return float(t_target < t_ego)


def cv_trajectory(sample: Sample, times: np.ndarray, t_pred: float | None = None, n_inputs: int = 2) -> np.ndarray:
    """Straight-line constant-velocity extrapolation of the target's last observed 2D motion."""
    t, xy = sample.observations("target", t_pred, n_inputs)
    vel = (xy[-1] - xy[-2]) / (t[-1] - t[-2])
    return xy[-1] + (np.asarray(times, dtype=float) - t[-1])[:, None] * vel


def template_trajectories(
    sample: Sample,
    times: np.ndarray,
    t_pred: float | None = None,
    n_inputs: int = 2,
) -> tuple[np.ndarray, np.ndarray]:
    """Go and yield kinematic templates for the target, decoded onto its path.

    Go keeps the current speed; yield brakes uniformly to stop at the
    contested-space entry and waits there. These turn a binary acceptance
    probability into trajectories for displacement metrics.
    """
    _, target = initial_conditions(sample, t_pred, n_inputs)
    t_obs, _ = sample.observations("target", t_pred, n_inputs)
    tau = np.asarray(times, dtype=float) - t_obs[-1]
    d0, v0 = target.d, max(target.v, 0.0)
    d_go = d0 - v0 * tau
    if d0 > 0 and v0 > 0:
        b = v0 * v0 / (2.0 * d0)
        t_stop = v0 / b
        tt = np.minimum(tau, t_stop)
        d_yield = d0 - v0 * tt + 0.5 * b * tt * tt
    else:
        d_yield = np.full_like(tau, d0)
    go = decode_to_2d(times, d_go, sample.target_path, sample.contested).xy
    stay = decode_to_2d(times, d_yield, sample.target_path, sample.contested).xy
    return go, stay
