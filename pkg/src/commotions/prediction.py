"""Prediction outputs derived from rollouts: acceptance probability, acceptance times and 2D tracks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from commotions.model import kernels as K
from commotions.model.simulate import TRAJ_FIELDS, RolloutPair, RolloutSet
from commotions.scenario import DecodedTrack, Sample, decode_to_2d

VARIANCE_CAP = 0.01  # s^2

__all__ = [
    "VARIANCE_CAP",
    "PredictionRecord",
    "RolloutSet",
    "aggregate",
    "decode_predictions",
    "extract_outcome",
]


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    """Aggregated prediction for one sample.

    ``acceptance_times`` holds one absolute time per rollout: the target's
    entry into the contested space, or the end of the horizon if it never
    entered. ``variance`` is the capped unbiased variance of those times.
    """

    sample_id: str
    a_pred: float
    outcomes: np.ndarray
    acceptance_times: np.ndarray
    variance: float
    trajectories: tuple[DecodedTrack, ...] = ()

    @property
    def n_p(self) -> int:
        return len(self.outcomes)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "a_pred": self.a_pred,
            "variance": self.variance,
            "acceptance_times": [float(x) for x in self.acceptance_times],
        }


def extract_outcome(pair: RolloutPair) -> tuple[int, float | None]:
    """``(1, t)`` if the target entered strictly before the ego, else ``(0, t or None)``.

    Entry times are exact roots of the piecewise-polynomial distance
    trajectories; ``t`` is relative to the prediction time and is ``None``
    when the target never entered within the horizon.
    """
    t_target = float(pair.times[K.O_ENTRY_TARGET])
    t_ego = float(pair.times[K.O_ENTRY_EGO])
    entered = np.isfinite(t_target)
    a = int(entered and t_target < t_ego)
    return a, (t_target if entered else None)


def aggregate(rollouts: RolloutSet, sample: Sample | None = None, decode: bool = False) -> PredictionRecord:
    """Fraction of accepting rollouts, per-rollout acceptance times and their capped variance."""
    if rollouts.n_p < 1:
        raise ValueError("at least one rollout is required")
    outcomes = rollouts.accepted.astype(np.int8)
    times = rollouts.acceptance_times
    if rollouts.n_p == 1:
        warnings.warn("variance of a single rollout is undefined; using 0", RuntimeWarning, stacklevel=2)
        var = 0.0
    else:
        var = min(float(np.var(times, ddof=1)), VARIANCE_CAP)
    trajs: tuple[DecodedTrack, ...] = ()
    if decode:
        if sample is None:
            raise ValueError("decoding needs the sample geometry")
        trajs = tuple(decode_predictions(rollouts, sample))
    return PredictionRecord(rollouts.sample_id, float(outcomes.mean()), outcomes, times, var, trajs)


def decode_predictions(rollouts: RolloutSet, sample: Sample) -> list[DecodedTrack]:
    """One 2D target track per rollout, on the simulation time grid."""
    if rollouts.traj is None:
        raise ValueError("rollouts were run without trajectory recording")
    t = rollouts.time_grid
    col = TRAJ_FIELDS.index("d_target")
    return [decode_to_2d(t, rollouts.traj[p, :, col], sample.target_path, sample.contested)
            for p in range(rollouts.n_p)]


def decode_ego_predictions(rollouts: RolloutSet, sample: Sample) -> list[DecodedTrack]:
    """Same as :func:`decode_predictions` for the ego agent."""
    if rollouts.traj is None:
        raise ValueError("rollouts were run without trajectory recording")
    t = rollouts.time_grid
    return [decode_to_2d(t, rollouts.traj[p, :, TRAJ_FIELDS.index("d_ego")], sample.ego_path, sample.contested)
            for p in range(rollouts.n_p)]
