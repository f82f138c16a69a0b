"""Binary and trajectory evaluation metrics and the paired t-test used to compare models."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata


class TimePoint(str, Enum):
    GAP_OPENING = "gap_opening"
    CHARACTERISTIC_GAP = "characteristic_gap"
    CRITICAL_DECISION = "critical_decision"


class SingleClassError(ValueError):
    """Both labels are needed but only one is present."""


@dataclass(frozen=True, eq=False)
class BinaryEval:
    labels: np.ndarray
    scores: np.ndarray
    time_point: TimePoint = TimePoint.GAP_OPENING

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=int)
        scores = np.asarray(self.scores, dtype=float)
        if labels.shape != scores.shape or labels.ndim != 1:
            raise ValueError("labels and scores must be 1D arrays of equal length")
        if not np.all(np.isin(labels, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "time_point", TimePoint(self.time_point))

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        pos = self.scores[self.labels == 1]
        neg = self.scores[self.labels == 0]
        if len(pos) == 0 or len(neg) == 0:
            raise SingleClassError("both accepted and rejected samples are required")
        return pos, neg


@dataclass(frozen=True, eq=False)
class TrajEval:
    """Per-sample predicted tracks ``(n_p, T, 2)`` against truth ``(T, 2)`` on shared timestamps."""

    predictions: Sequence[np.ndarray]
    truths: Sequence[np.ndarray]
    pred_times: Sequence[np.ndarray] | None = None
    truth_times: Sequence[np.ndarray] | None = None
    weights: Sequence[np.ndarray] | None = None  # per-rollout weights; uniform if absent


def auc(ev: BinaryEval) -> float:
    """Probability that a random positive outscores a random negative (ties count one half)."""
    pos, neg = ev.split()
    ranks = rankdata(np.concatenate([pos, neg]))
    n1, n0 = len(pos), len(neg)
    return float((ranks[:n1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def roc_points(ev: BinaryEval) -> np.ndarray:
    """ROC curve as ``(fpr, tpr)`` rows, one per distinct threshold; its trapezoid area equals :func:`auc`."""
    pos, neg = ev.split()
    thresholds = np.unique(ev.scores)[::-1]
    fpr = [0.0] + [float(np.mean(neg >= th)) for th in thresholds]
    tpr = [0.0] + [float(np.mean(pos >= th)) for th in thresholds]
    return np.column_stack([fpr, tpr])


def ade(ev: TrajEval) -> float:
    """Mean over samples of the mean over rollouts of the mean displacement over time."""
    if len(ev.predictions) == 0 or len(ev.predictions) != len(ev.truths):
        raise ValueError("need one truth per predicted sample")
    per_sample = []
    for i, (pred, truth) in enumerate(zip(ev.predictions, ev.truths)):
        pred = np.asarray(pred, dtype=float)
        truth = np.asarray(truth, dtype=float)
        if pred.ndim == 2:
            pred = pred[None]
        if pred.shape[1:] != truth.shape or truth.shape[0] == 0:
            raise ValueError(f"sample {i}: prediction and truth windows differ")
        if ev.pred_times is not None and ev.truth_times is not None:
            if not np.allclose(ev.pred_times[i], ev.truth_times[i], atol=1e-9, rtol=0):
                raise ValueError(f"sample {i}: prediction and truth timestamps differ")
        disp = np.linalg.norm(pred - truth[None], axis=-1).mean(axis=1)
        if ev.weights is None:
            per_sample.append(disp.mean())
        else:
            w = np.asarray(ev.weights[i], dtype=float)
            if w.shape != disp.shape or np.any(w < 0) or w.sum() <= 0:
                raise ValueError(f"sample {i}: invalid rollout weights")
            per_sample.append(float(np.dot(w, disp) / w.sum()))
    return float(np.mean(per_sample))


def tnr_pr(ev: BinaryEval) -> float:
    """True negative rate at the largest threshold that still recalls every positive."""
    pos, neg = ev.split()
    return float(np.mean(neg < pos.min()))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant: bool


def _t_sf_two_sided(t: float, df: int) -> float:
    x = df / (df + t * t)
    return float(betainc(0.5 * df, 0.5, x))


def paired_t_test(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """Two-sided paired t-test on ``a - b``.

    When every difference is the same nonzero value the variance is zero; this
    is reported as significant with ``t = ±inf`` and ``p = 0``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must have equal length")
    n = len(a)
    if n < 2:
        raise ValueError("at least two pairs are required")
    diff = a - b
    mean = diff.mean()
    sd = diff.std(ddof=1)
    if sd == 0.0 or sd <= 1e-14 * max(1.0, abs(mean)):
        if mean == 0.0:
            return TTestResult(0.0, 1.0, False)
        return TTestResult(float(np.copysign(np.inf, mean)), 0.0, True)
    t = float(mean / (sd / np.sqrt(n)))
    p = _t_sf_two_sided(t, n - 1)
    return TTestResult(t, p, p < alpha)
