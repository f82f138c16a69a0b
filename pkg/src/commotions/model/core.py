"""Typed front end of the interaction model: configuration, parameters and single-step operations."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from commotions.model import kernels as K
from commotions.scenario import ProjectedState


class ControlScheme(str, Enum):
    ACCELERATION = "AC"
    JERK = "JC"


class InteractionMode(str, Enum):
    INTERACTIVE = "IM"
    NON_INTERACTIVE = "NM"


class BehaviorIntent(int, Enum):
    PASS_FIRST = K.FIRST
    PASS_SECOND = K.SECOND


DEFAULT_ACTIONS = {
    ControlScheme.ACCELERATION: (-4.0, -2.0, 0.0, 2.0, 4.0),
    ControlScheme.JERK: (-10.0, -5.0, 0.0, 5.0, 10.0),
}


@dataclass(frozen=True)
class ActionSet:
    """Discrete control magnitudes (m/s^2 under AC, m/s^3 under JC)."""

    actions: tuple[float, ...]

    def __post_init__(self) -> None:
        acts = tuple(float(a) for a in self.actions)
        if len(acts) < 3:
            raise ValueError("an action set needs at least three actions")
        if 0.0 not in acts:
            raise ValueError("an action set must contain 0")
        if sorted(acts) != list(acts) or len(set(acts)) != len(acts):
            raise ValueError("actions must be strictly increasing")
        if not np.allclose(sorted(acts), sorted(-a for a in acts)):
            raise ValueError("an action set must be symmetric about 0")
        object.__setattr__(self, "actions", acts)

    def __len__(self) -> int:
        return len(self.actions)

    def as_array(self) -> np.ndarray:
        return np.array(self.actions, dtype=float)

    @property
    def zero_index(self) -> int:
        return self.actions.index(0.0)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings that are not fitted."""

    mode: InteractionMode = InteractionMode.NON_INTERACTIVE
    scheme: ControlScheme = ControlScheme.ACCELERATION
    dt: float = 0.1
    horizon: float = 15.0
    plan_horizon: float = 10.0
    action_duration: float = 0.5
    a_max: float = 4.0
    b_max: float = 8.0
    a_resume: float = 2.0
    resume_duration: float = 3.0
    safety_margin: float = 0.5
    collision_penalty: float = 1.0e4
    process_noise: float = 1.0
    v_min_clear: float = 1.0
    initial_speed_var: float = 1.0
    actions: ActionSet | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", InteractionMode(self.mode))
        object.__setattr__(self, "scheme", ControlScheme(self.scheme))
        if self.actions is None:
            object.__setattr__(self, "actions", ActionSet(DEFAULT_ACTIONS[self.scheme]))
        elif not isinstance(self.actions, ActionSet):
            object.__setattr__(self, "actions", ActionSet(tuple(self.actions)))
        if not (self.dt > 0 and self.horizon > 0 and self.plan_horizon > 0 and self.action_duration > 0):
            raise ValueError("dt, horizon, plan_horizon and action_duration must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def vector(self, outcome_only: bool = False) -> np.ndarray:
        cfg = np.zeros(K.N_CFG)
        cfg[K.C_DT] = self.dt
        cfg[K.C_HORIZON] = self.horizon
        cfg[K.C_PLAN_HORIZON] = self.plan_horizon
        cfg[K.C_ACTION_DURATION] = self.action_duration
        cfg[K.C_A_MAX] = self.a_max
        cfg[K.C_B_MAX] = self.b_max
        cfg[K.C_A_RESUME] = self.a_resume
        cfg[K.C_RESUME_DURATION] = self.resume_duration
        cfg[K.C_MARGIN] = self.safety_margin
        cfg[K.C_COLLISION] = self.collision_penalty
        cfg[K.C_PROCESS_NOISE] = self.process_noise
        cfg[K.C_SCHEME] = K.SCHEME_AC if self.scheme is ControlScheme.ACCELERATION else K.SCHEME_JC
        cfg[K.C_MODE] = K.MODE_IM if self.mode is InteractionMode.INTERACTIVE else K.MODE_NM
        cfg[K.C_OUTCOME_ONLY] = 1.0 if outcome_only else 0.0
        cfg[K.C_V_MIN_CLEAR] = self.v_min_clear
        cfg[K.C_P0_SPEED_VAR] = self.initial_speed_var
        return cfg

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["mode"] = self.mode.value
        out["scheme"] = self.scheme.value
        out["actions"] = list(self.actions.actions)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        data = dict(data)
        if data.get("actions") is not None:
            data["actions"] = ActionSet(tuple(data["actions"]))
        return cls(**data)


PARAM_NAMES = ("sigma_obs", "lam", "sigma_acc", "threshold", "w_time", "w_ctrl", "w_rule", "beta")

DEFAULT_BOUNDS = {
    "sigma_obs": (0.01, 3.0),
    "lam": (0.01, 0.99),
    "sigma_acc": (0.0, 5.0),
    "threshold": (0.0, 3.0),
    "w_time": (0.0, 5.0),
    "w_ctrl": (0.0, 2.0),
    "w_rule": (0.0, 10.0),
    "beta": (0.05, 10.0),
}


@dataclass(frozen=True)
class ModelParams:
    """Fitted model parameters and the box they are searched in.

    ``sigma_obs`` perception noise (m), ``lam`` accumulator leak, ``sigma_acc``
    accumulator noise, ``threshold`` switching threshold, ``w_time``/``w_ctrl``/
    ``w_rule`` value weights, ``beta`` theory-of-mind inverse temperature.
    """

    sigma_obs: float = 0.5
    lam: float = 0.5
    sigma_acc: float = 0.5
    threshold: float = 0.2
    w_time: float = 1.0
    w_ctrl: float = 0.1
    w_rule: float = 1.0
    beta: float = 1.0
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS), compare=False)

    def __post_init__(self) -> None:
        for name in PARAM_NAMES:
            lo, hi = self.bounds[name]
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds for {name} must be finite with lo < hi")
            val = getattr(self, name)
            if not (lo <= val <= hi):
                raise ValueError(f"{name}={val} outside its bounds [{lo}, {hi}]")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    def bounds_array(self) -> np.ndarray:
        return np.array([self.bounds[n] for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values, bounds: dict | None = None) -> "ModelParams":
        kwargs = {n: float(v) for n, v in zip(PARAM_NAMES, values)}
        return cls(**kwargs, bounds=dict(bounds or DEFAULT_BOUNDS))

    def to_dict(self) -> dict:
        return {"values": {n: getattr(self, n) for n in PARAM_NAMES},
                "bounds": {n: list(self.bounds[n]) for n in PARAM_NAMES}}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        bounds = {n: tuple(b) for n, b in data.get("bounds", DEFAULT_BOUNDS).items()}
        return cls(**data["values"], bounds=bounds)


@dataclass(frozen=True)
class BeliefState:
    """Gaussian belief over the other agent's (distance, speed)."""

    mean: tuple[float, float]
    cov: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self) -> None:
        c = np.asarray(self.cov, dtype=float)
        if c.shape != (2, 2) or not np.allclose(c, c.T):
            raise ValueError("covariance must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(c).min() < -1e-12 * max(1.0, np.abs(c).max()):
            raise ValueError("covariance must be positive semi-definite")

    @classmethod
    def exact(cls, state: ProjectedState, position_var: float = 0.0, speed_var: float = 1.0) -> "BeliefState":
        return cls((state.d, state.v), ((position_var, 0.0), (0.0, speed_var)))


@dataclass
class AgentSimState:
    """Kinematic and decision state of one simulated agent."""

    d: float
    v: float
    a: float = 0.0
    current: int = 0  # index into the action set
    accumulators: np.ndarray | None = None

    def ensure_accumulators(self, n_actions: int) -> np.ndarray:
        if self.accumulators is None:
            self.accumulators = np.zeros(n_actions)
        if len(self.accumulators) != n_actions:
            raise ValueError("one accumulator per action is required")
        return self.accumulators


def perceive(
    true_other: ProjectedState,
    belief: BeliefState,
    sigma_obs: float,
    dt: float,
    rng: np.random.Generator,
    process_noise: float = 1.0,
) -> BeliefState:
    """Kalman predict over ``dt`` and update with a noisy position observation."""
    vals = (true_other.d, true_other.v, sigma_obs, dt, *belief.mean, *np.ravel(belief.cov))
    if not np.all(np.isfinite(vals)):
        raise ValueError("perceive received non-finite input")
    if dt <= 0 or sigma_obs < 0:
        raise ValueError("dt must be positive and sigma_obs non-negative")
    mean = np.array(belief.mean, dtype=float)
    cov = np.array([belief.cov[0][0], belief.cov[0][1], belief.cov[1][1]], dtype=float)
    K.kalman_step(mean, cov, float(true_other.d), float(sigma_obs), float(dt), float(process_noise),
                  float(rng.standard_normal()))
    return BeliefState((float(mean[0]), float(mean[1])), ((cov[0], cov[1]), (cov[1], cov[2])))


@dataclass(frozen=True)
class Trajectory:
    """Closed-form piecewise-polynomial plan with its feasibility flag."""

    segments: np.ndarray  # (n, 5): t0, d0, v0, a0, jerk
    feasible: bool
    horizon: float

    def state(self, t: float) -> tuple[float, float, float]:
        return K.state_at(self.segments, len(self.segments), float(t))

    def position(self, t) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        return np.array([self.state(x)[0] for x in ts]).reshape(np.shape(t))

    def crossing_time(self, level: float) -> float:
        return K.cross_time(self.segments, len(self.segments), float(level), self.horizon)

    def control_effort(self) -> float:
        """Integral of squared acceleration over the horizon."""
        return K.control_effort(self.segments, len(self.segments), self.horizon)

    def summary(self, length: float, v_min: float = 1.0) -> tuple[float, float, float, float]:
        return K.summarize(self.segments, len(self.segments), float(length), self.horizon, float(v_min))


def occupancy_from_belief(belief: BeliefState, length: float, horizon: float) -> tuple[float, float]:
    """Entry/exit times of the other agent extrapolated at its believed constant speed."""
    seg = np.zeros((K.MAX_SEGMENTS, 5))
    n = K._push(seg, 0, 0.0, float(belief.mean[0]), max(float(belief.mean[1]), 0.0), 0.0, 0.0)
    t_in, t_out, _, _ = K.summarize(seg, n, float(length), float(horizon), 1.0)
    return t_in, t_out


def generate_trajectory(
    state: AgentSimState,
    u: float,
    behavior: BehaviorIntent,
    other_belief: BeliefState | None,
    horizon: float,
    config: SimConfig,
    *,
    length: float = 4.0,
    other_length: float = 4.0,
    other_occupancy: tuple[float, float] | None = None,
) -> Trajectory:
    """Plan: apply ``u`` for the action duration, then continue consistently with ``behavior``.

    The other agent's occupancy of the contested space comes from
    ``other_occupancy`` when given, else from a constant-speed extrapolation
    of ``other_belief``; with neither, the space is treated as free.
    ``length`` and ``other_length`` are the distances each agent travels
    between entering and leaving the space.
    """
    if u not in config.actions.actions:
        raise ValueError(f"control {u} is not in the action set")
    if other_occupancy is None:
        if other_belief is None:
            other_occupancy = (np.inf, np.inf)
        else:
            other_occupancy = occupancy_from_belief(other_belief, other_length, horizon)
    cfg = config.vector()
    cfg[K.C_PLAN_HORIZON] = horizon
    seg = np.zeros((K.MAX_SEGMENTS, 5))
    n, ok = K.plan(seg, float(state.d), float(state.v), float(state.a), float(u), int(behavior),
                   float(other_occupancy[0]), float(other_occupancy[1]), float(length), cfg)
    return Trajectory(seg[:n].copy(), bool(ok), float(horizon))


def evaluate_value(
    traj_self: Trajectory,
    traj_other: Trajectory,
    params: ModelParams,
    *,
    has_priority: bool,
    length_self: float,
    length_other: float,
    config: SimConfig | None = None,
) -> float:
    """Value of ``traj_self`` against ``traj_other``: delay, control effort, rule violation and collision terms."""
    if traj_self.horizon != traj_other.horizon:
        raise ValueError("both trajectories must span the same horizon")
    config = config or SimConfig()
    s = traj_self.summary(length_self, config.v_min_clear)
    o = traj_other.summary(length_other, config.v_min_clear)
    if not np.all(np.isfinite([s[2], s[3]])):
        raise ValueError("non-finite trajectory summary")
    return float(K.value_of(s[0], s[1], s[2], s[3], traj_self.feasible, o[0], o[1],
                            has_priority, params.as_array(), config.collision_penalty))


def theory_of_mind_weights(other_values, beta: float) -> np.ndarray:
    """Probability of each behaviour of the other agent.

    ``other_values`` has one row per behaviour and one column per control;
    each behaviour is scored by its best control and the scores go through a
    softmax with inverse temperature ``beta``.
    """
    vals = np.asarray(other_values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if not np.all(np.isfinite(vals)) or not beta > 0:
        raise ValueError("values must be finite and beta positive")
    best = vals.max(axis=1)
    z = beta * (best - best.max())
    w = np.exp(z)
    return w / w.sum()


def accumulate_and_select(
    state: AgentSimState,
    weighted_values,
    params: ModelParams,
    dt: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """Update the action accumulators in place and return them with the (possibly new) action index."""
    values = np.asarray(weighted_values, dtype=float)
    acc = state.ensure_accumulators(len(values))
    eps = rng.standard_normal(len(values))
    state.current = int(K.accumulate(acc, values, int(state.current), params.lam, params.sigma_acc,
                                     params.threshold, float(dt), eps))
    return acc, state.current
