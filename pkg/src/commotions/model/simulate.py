"""Stochastic rollouts: one simulated trajectory pair per call, batched per sample."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from commotions.model import kernels as K
from commotions.model.core import ModelParams, SimConfig
from commotions.scenario import ProjectedState, Sample, initial_conditions

TRAJ_FIELDS = ("d_ego", "v_ego", "a_ego", "d_target", "v_target", "a_target")


def _stream_key(seed: int, sample_id: str) -> np.ndarray:
    h = hashlib.blake2b(f"{int(seed)}/{sample_id}".encode(), digest_size=16).digest()
    return np.frombuffer(h, dtype=np.uint64).copy()


def rollout_rng(seed: int, sample_id: str, index: int, key: np.ndarray | None = None) -> np.random.Generator:
    """Independent random stream for rollout ``index`` of ``sample_id`` under ``seed``.

    Streams are Philox counter blocks keyed by ``(seed, sample_id)`` and offset
    by the rollout index, so they do not depend on execution order.
    """
    if key is None:
        key = _stream_key(seed, sample_id)
    counter = np.array([0, 0, int(index), 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


@dataclass(frozen=True)
class RolloutSet:
    """``n_p`` simulated trajectory pairs of one sample.

    ``times`` holds per-rollout entry/exit times of the contested space
    relative to the prediction time ``t0`` (``inf`` if not reached within the
    horizon). ``traj``/``controls`` are present only for recorded runs.
    """

    sample_id: str
    t0: float
    dt: float
    horizon: float
    times: np.ndarray  # (n_p, 4): entry_ego, exit_ego, entry_target, exit_target
    stats: np.ndarray  # (n_p, 4): switches_target, switches_ego, pass_second_feasible, steps
    lengths: tuple[float, float]
    traj: np.ndarray | None = None  # (n_p, n_steps + 1, 6), see TRAJ_FIELDS
    controls: np.ndarray | None = None  # (n_p, n_steps, 2): target, ego

    @property
    def n_p(self) -> int:
        return len(self.times)

    @property
    def accepted(self) -> np.ndarray:
        return self.times[:, K.O_ENTRY_TARGET] < self.times[:, K.O_ENTRY_EGO]

    @property
    def unresolved(self) -> np.ndarray:
        return ~np.isfinite(self.times[:, K.O_ENTRY_TARGET]) & ~np.isfinite(self.times[:, K.O_ENTRY_EGO])

    @property
    def acceptance_times(self) -> np.ndarray:
        """Absolute time the target reaches the contested space; the horizon end if it never does."""
        rel = self.times[:, K.O_ENTRY_TARGET]
        rel = np.where(np.isfinite(rel), rel, self.horizon)
        return self.t0 + rel

    @property
    def time_grid(self) -> np.ndarray:
        if self.traj is None:
            raise ValueError("rollouts were run without trajectory recording")
        return self.t0 + self.dt * np.arange(self.traj.shape[1])

    def pair(self, index: int) -> "RolloutPair":
        return RolloutPair(
            t0=self.t0, dt=self.dt, horizon=self.horizon,
            times=self.times[index], stats=self.stats[index], lengths=self.lengths,
            traj=None if self.traj is None else self.traj[index],
            controls=None if self.controls is None else self.controls[index],
        )


@dataclass(frozen=True)
class RolloutPair:
    """A single simulated ego/target trajectory pair."""

    t0: float
    dt: float
    horizon: float
    times: np.ndarray
    stats: np.ndarray
    lengths: tuple[float, float]
    traj: np.ndarray | None = None
    controls: np.ndarray | None = None

    @property
    def accepted(self) -> bool:
        return bool(self.times[K.O_ENTRY_TARGET] < self.times[K.O_ENTRY_EGO])

    @property
    def unresolved(self) -> bool:
        return not np.isfinite(self.times[K.O_ENTRY_TARGET]) and not np.isfinite(self.times[K.O_ENTRY_EGO])

    def series(self, name: str) -> np.ndarray:
        if self.traj is None:
            raise ValueError("pair was simulated without trajectory recording")
        return self.traj[:, TRAJ_FIELDS.index(name)]


def _noise_shape(config: SimConfig) -> tuple[int, int, int]:
    # only the target decides under NM, so the ego needs no draws
    n_agents = 2 if config.mode.value == "IM" else 1
    return config.n_steps, n_agents, 1 + len(config.actions)


def _run(init, lengths, params_vec, config, noise, outcome_only, record):
    n = len(init)
    times = np.empty((n, 4))
    stats = np.empty((n, 4))
    if record:
        traj = np.empty((n, config.n_steps + 1, 6))
        ctrl = np.empty((n, config.n_steps, 2))
    else:
        traj = np.empty((0, 1, 6))
        ctrl = np.empty((0, 1, 2))
    K.simulate_rollouts(np.ascontiguousarray(init, dtype=float), np.ascontiguousarray(lengths, dtype=float),
                        params_vec, config.vector(outcome_only), config.actions.as_array(), noise,
                        times, stats, traj, ctrl)
    return times, stats, (traj if record else None), (ctrl if record else None)


def simulate_pair(
    init: tuple[ProjectedState, ProjectedState],
    params: ModelParams,
    config: SimConfig,
    rng: np.random.Generator,
    lengths: tuple[float, float] = (4.0, 4.0),
    record: bool = True,
) -> RolloutPair:
    """Simulate one ego/target trajectory pair from projected initial states ``(ego, target)``."""
    if config.horizon <= 0 or config.dt <= 0:
        raise ValueError("horizon and dt must be positive")
    ego, target = init
    init_arr = np.array([[ego.d, ego.v, target.d, target.v]])
    noise = rng.standard_normal((1, *_noise_shape(config)))
    times, stats, traj, ctrl = _run(init_arr, np.array([lengths]), params.as_array(), config, noise,
                                    outcome_only=not record, record=record)
    return RolloutPair(0.0, config.dt, config.horizon, times[0], stats[0], tuple(lengths),
                       None if traj is None else traj[0], None if ctrl is None else ctrl[0])


@dataclass(frozen=True)
class BatchJob:
    """Everything needed to simulate one sample's rollouts."""

    sample_id: str
    t0: float
    ego: ProjectedState
    target: ProjectedState
    lengths: tuple[float, float]


def make_job(sample: Sample, t_pred: float | None = None, n_inputs: int = 2) -> BatchJob:
    ego, target = initial_conditions(sample, t_pred, n_inputs)
    t_ego, _ = sample.observations("ego", t_pred, n_inputs)
    t_tgt, _ = sample.observations("target", t_pred, n_inputs)
    length = sample.contested.occupancy_length
    return BatchJob(sample.id, float(max(t_ego[-1], t_tgt[-1])), ego, target, (length, length))


def _simulate_job(job: BatchJob, params_vec, config: SimConfig, n_p: int, seed: int, record: bool) -> RolloutSet:
    # one stream per (seed, sample); rollout p consumes the p-th block, so the
    # first m rollouts are the same for any n_p >= m
    noise = rollout_rng(seed, job.sample_id, 0).standard_normal((n_p, *_noise_shape(config)))
    init = np.tile([job.ego.d, job.ego.v, job.target.d, job.target.v], (n_p, 1))
    lengths = np.tile(job.lengths, (n_p, 1))
    times, stats, traj, ctrl = _run(init, lengths, params_vec, config, noise, outcome_only=not record, record=record)
    return RolloutSet(job.sample_id, job.t0, config.dt, config.horizon, times, stats, job.lengths, traj, ctrl)


def default_workers() -> int:
    return int(os.environ.get("COMMOTIONS_WORKERS", "1"))


def simulate_jobs(
    jobs: Sequence[BatchJob],
    params: ModelParams | np.ndarray,
    config: SimConfig,
    n_p: int,
    seed: int,
    record: bool = False,
    workers: int | None = None,
) -> list[RolloutSet]:
    """Simulate ``n_p`` rollouts for every job; results come back in job order.

    Rollouts depend only on ``(seed, sample id, rollout index)``, so the output
    is identical for any worker count.
    """
    if n_p < 1:
        raise ValueError("n_p must be at least 1")
    params_vec = params.as_array() if isinstance(params, ModelParams) else np.asarray(params, dtype=float)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(jobs) <= 1:
        return [_simulate_job(j, params_vec, config, n_p, seed, record) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: _simulate_job(j, params_vec, config, n_p, seed, record), jobs))


def simulate_batch(
    sample: Sample,
    params: ModelParams,
    config: SimConfig,
    n_p: int,
    seed: int,
    t_pred: float | None = None,
    record: bool = True,
) -> RolloutSet:
    """``n_p`` independent rollouts of one sample, predicted from time ``t_pred`` (default: gap opening)."""
    return simulate_jobs([make_job(sample, t_pred)], params, config, n_p, seed, record=record, workers=1)[0]
