"""Compiled inner loops of the interaction model.

All trajectories are piecewise polynomials in time stored as rows of a
``(MAX_SEGMENTS, 5)`` array: ``[t0, d0, v0, a0, jerk]``. Row ``k`` is valid
from ``t0[k]`` until ``t0[k + 1]`` (the last row is open-ended), and within a
row ``d(t0 + tau) = d0 - v0*tau - a0*tau**2/2 - jerk*tau**3/6`` (``d``
decreases as the agent moves forward).

The functions here operate on plain floats and arrays so they can be called
from the rollout kernel without leaving nopython mode; :mod:`commotions.model.core`
wraps them in typed Python objects.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

INF = np.inf
NEG = -1.0e18  # stands in for "already passed before t = 0"
# an agent standing exactly on the boundary (a yielding stop) has not entered
BOUNDARY_TOL = 1.0e-9
MAX_SEGMENTS = 12

FIRST = 0
SECOND = 1

SCHEME_AC = 0
SCHEME_JC = 1
MODE_NM = 0
MODE_IM = 1

# config vector layout
C_DT = 0
C_HORIZON = 1
C_PLAN_HORIZON = 2
C_ACTION_DURATION = 3
C_A_MAX = 4
C_B_MAX = 5
C_A_RESUME = 6
C_RESUME_DURATION = 7
C_MARGIN = 8
C_COLLISION = 9
C_PROCESS_NOISE = 10
C_SCHEME = 11
C_MODE = 12
C_OUTCOME_ONLY = 13
C_V_MIN_CLEAR = 14
C_P0_SPEED_VAR = 15
N_CFG = 16

# parameter vector layout
P_SIGMA_OBS = 0
P_LAMBDA = 1
P_SIGMA_ACC = 2
P_THRESHOLD = 3
P_W_TIME = 4
P_W_CTRL = 5
P_W_RULE = 6
P_BETA = 7
N_PARAMS = 8

# rollout output layout
O_ENTRY_EGO = 0
O_EXIT_EGO = 1
O_ENTRY_TARGET = 2
O_EXIT_TARGET = 3
S_SWITCHES_TARGET = 0
S_SWITCHES_EGO = 1
S_PASS_SECOND_FEASIBLE = 2
S_STEPS = 3


@njit(cache=True, nogil=True)
def seg_eval(d0, v0, a0, j, tau):
    tau2 = tau * tau
    d = d0 - v0 * tau - 0.5 * a0 * tau2 - j * tau2 * tau / 6.0
    v = v0 + a0 * tau + 0.5 * j * tau2
    a = a0 + j * tau
    return d, v, a


@njit(cache=True, nogil=True)
def first_stop_time(v, a, j):
    """Smallest tau > 0 at which the speed polynomial returns to zero."""
    if j == 0.0:
        if a < 0.0 and v > 0.0:
            return -v / a
        return INF
    qa = 0.5 * j
    disc = a * a - 4.0 * qa * v
    if disc < 0.0:
        return INF
    sq = math.sqrt(disc)
    q = -0.5 * (a + math.copysign(sq, a))
    best = INF
    r1 = q / qa
    if r1 > 1e-15 and r1 < best:
        best = r1
    if q != 0.0:
        r2 = v / q
        if r2 > 1e-15 and r2 < best:
            best = r2
    return best


@njit(cache=True, nogil=True)
def add_motion(seg, n, t, d, v, a, j, duration, a_lo, a_hi):
    """Append the motion under constant jerk ``j`` for ``duration`` seconds.

    Acceleration saturates at ``[a_lo, a_hi]`` and speed never goes negative
    (a stopped agent holds with zero acceleration until the jerk pushes it
    forward again). Returns the new segment count and end state.
    """
    rem = duration
    for _ in range(8):
        if rem <= 0.0:
            break
        if v <= 0.0:
            v = 0.0
            if a < 0.0:
                a = 0.0
            if a == 0.0 and j <= 0.0:
                seg[n, 0] = t
                seg[n, 1] = d
                seg[n, 2] = 0.0
                seg[n, 3] = 0.0
                seg[n, 4] = 0.0
                n += 1
                t += rem
                rem = 0.0
                break
        je = j
        t_clamp = INF
        if j > 0.0:
            if a >= a_hi:
                je = 0.0
            else:
                t_clamp = (a_hi - a) / j
        elif j < 0.0:
            if a <= a_lo:
                je = 0.0
            else:
                t_clamp = (a_lo - a) / j
        t_stop = first_stop_time(v, a, je)
        tau = rem
        kind = 0
        if t_clamp < tau:
            tau = t_clamp
            kind = 1
        if t_stop <= tau:
            tau = t_stop
            kind = 2
        seg[n, 0] = t
        seg[n, 1] = d
        seg[n, 2] = v
        seg[n, 3] = a
        seg[n, 4] = je
        n += 1
        d, v, a = seg_eval(d, v, a, je, tau)
        t += tau
        rem -= tau
        if kind == 2:
            v = 0.0
        elif kind == 1:
            a = a_hi if je > 0.0 else a_lo
    return n, t, d, v, a


@njit(cache=True, nogil=True)
def segment_root(delta, v, a, j, tau_max):
    """Root in ``[0, tau_max]`` of ``delta - v*tau - a*tau^2/2 - j*tau^3/6``.

    Requires ``delta > 0`` and a non-positive value at ``tau_max``. Closed
    form for quadratics; safeguarded Newton iteration for cubics.
    """
    if j == 0.0:
        if a == 0.0:
            return min(delta / v, tau_max)
        disc = v * v + 2.0 * a * delta
        if disc < 0.0:
            disc = 0.0
        den = v + math.sqrt(disc)
        if den <= 0.0:
            return tau_max
        return min(2.0 * delta / den, tau_max)
    lo = 0.0
    hi = tau_max
    tau = 0.5 * (lo + hi)
    for _ in range(200):
        tau2 = tau * tau
        f = delta - v * tau - 0.5 * a * tau2 - j * tau2 * tau / 6.0
        if f > 0.0:
            lo = tau
        else:
            hi = tau
        fp = -(v + a * tau + 0.5 * j * tau2)
        nxt = 0.5 * (lo + hi)
        if fp < 0.0:
            cand = tau - f / fp
            if lo < cand < hi:
                nxt = cand
        if abs(nxt - tau) <= 1e-16 * max(1.0, tau) or hi - lo <= 1e-15 * max(1.0, hi):
            tau = nxt
            break
        tau = nxt
    return tau


@njit(cache=True, nogil=True)
def cross_time(seg, n, level, horizon):
    """First time in ``[0, horizon]`` at which ``d(t) <= level``; ``inf`` if never."""
    for k in range(n):
        t0 = seg[k, 0]
        if t0 >= horizon and k > 0:
            return INF
        d0 = seg[k, 1]
        if d0 <= level:
            return t0
        t1 = seg[k + 1, 0] if k + 1 < n else horizon
        if t1 > horizon:
            t1 = horizon
        span = t1 - t0
        if span <= 0.0:
            continue
        d_end, _, _ = seg_eval(d0, seg[k, 2], seg[k, 3], seg[k, 4], span)
        if d_end <= level:
            return t0 + segment_root(d0 - level, seg[k, 2], seg[k, 3], seg[k, 4], span)
    return INF


@njit(cache=True, nogil=True)
def state_at(seg, n, t):
    k = 0
    while k + 1 < n and seg[k + 1, 0] <= t:
        k += 1
    return seg_eval(seg[k, 1], seg[k, 2], seg[k, 3], seg[k, 4], t - seg[k, 0])


@njit(cache=True, nogil=True)
def control_effort(seg, n, horizon):
    """Integral of squared acceleration over ``[0, horizon]``."""
    total = 0.0
    for k in range(n):
        t0 = seg[k, 0]
        if t0 >= horizon:
            break
        t1 = seg[k + 1, 0] if k + 1 < n else horizon
        if t1 > horizon:
            t1 = horizon
        T = t1 - t0
        if T <= 0.0:
            continue
        a = seg[k, 3]
        j = seg[k, 4]
        total += a * a * T + a * j * T * T + j * j * T * T * T / 3.0
    return total


@njit(cache=True, nogil=True)
def summarize(seg, n, length, horizon, v_min):
    """(entry time, exit time, clearance time, control effort) of a planned trajectory."""
    effort = control_effort(seg, n, horizon)
    if seg[0, 1] <= -length:
        return NEG, NEG, 0.0, effort
    t_in = cross_time(seg, n, -BOUNDARY_TOL, horizon)
    t_out = cross_time(seg, n, -length, horizon)
    if t_out < INF:
        t_clear = t_out
    else:
        d_h, v_h, _ = state_at(seg, n, horizon)
        t_clear = horizon + (d_h + length) / max(v_h, v_min)
    return t_in, t_out, t_clear, effort


@njit(cache=True, nogil=True)
def _push(seg, n, t, d, v, a, j):
    seg[n, 0] = t
    seg[n, 1] = d
    seg[n, 2] = v
    seg[n, 3] = a
    seg[n, 4] = j
    return n + 1


@njit(cache=True, nogil=True)
def plan(seg, d, v, a, u, behavior, other_in, other_out, length, cfg):
    """Fill ``seg`` with the trajectory for control ``u`` followed by a behaviour continuation.

    ``other_in``/``other_out`` bound the other agent's predicted occupancy of
    the contested space (relative times). Returns ``(n_segments, feasible)``.
    """
    a_max = cfg[C_A_MAX]
    margin = cfg[C_MARGIN]
    if cfg[C_SCHEME] == SCHEME_AC:
        n, t1, d1, v1, a1 = add_motion(seg, 0, 0.0, d, v, u, 0.0, cfg[C_ACTION_DURATION], -INF, INF)
    else:
        n, t1, d1, v1, a1 = add_motion(seg, 0, 0.0, d, v, a, u, cfg[C_ACTION_DURATION], -a_max, a_max)

    free = other_in == INF or other_out + margin <= t1
    if free or d1 <= -length:
        n = _push(seg, n, t1, d1, v1, 0.0, 0.0)
        return n, True

    if behavior == FIRST:
        span = other_in - margin - t1
        dist = d1 + length
        if span <= 0.0:
            n = _push(seg, n, t1, d1, v1, 0.0, 0.0)
            return n, False
        if v1 * span >= dist:
            n = _push(seg, n, t1, d1, v1, 0.0, 0.0)
            return n, True
        a_req = 2.0 * (dist - v1 * span) / (span * span)
        acc = min(a_req, a_max)
        n = _push(seg, n, t1, d1, v1, acc, 0.0)
        d2, v2, _ = seg_eval(d1, v1, acc, 0.0, span)
        n = _push(seg, n, t1 + span, d2, v2, 0.0, 0.0)
        return n, a_req <= a_max

    # pass second: stop at the boundary, wait for the other to leave
    t_free = other_out + margin
    if d1 < -BOUNDARY_TOL or (d1 <= 0.0 and v1 > 0.0):
        n = _push(seg, n, t1, d1, v1, 0.0, 0.0)
        return n, False
    if v1 > 0.0 and t1 + d1 / v1 >= t_free:
        n = _push(seg, n, t1, d1, v1, 0.0, 0.0)
        return n, True
    feasible = True
    if v1 > 0.0:
        b = v1 * v1 / (2.0 * d1)
        if b > cfg[C_B_MAX]:
            feasible = False
        n = _push(seg, n, t1, d1, v1, -b, 0.0)
        t_stop = t1 + 2.0 * d1 / v1
        d_stop = 0.0
    else:
        t_stop = t1
        d_stop = d1
    if t_free == INF:
        n = _push(seg, n, t_stop, d_stop, 0.0, 0.0, 0.0)
        return n, feasible
    t_go = t_stop
    if t_free > t_stop:
        n = _push(seg, n, t_stop, d_stop, 0.0, 0.0, 0.0)
        t_go = t_free
    a_res = cfg[C_A_RESUME]
    dur = cfg[C_RESUME_DURATION]
    n = _push(seg, n, t_go, d_stop, 0.0, a_res, 0.0)
    d3, v3, _ = seg_eval(d_stop, 0.0, a_res, 0.0, dur)
    n = _push(seg, n, t_go + dur, d3, v3, 0.0, 0.0)
    return n, feasible


@njit(cache=True, nogil=True)
def value_of(t_in, t_out, t_clear, effort, feasible, other_in, other_out, has_priority, params, collision):
    """Value an agent assigns to its own trajectory given the other's occupancy interval."""
    val = -params[P_W_TIME] * t_clear - params[P_W_CTRL] * effort
    if not has_priority and t_in < other_in:
        val -= params[P_W_RULE]
    overlap = t_in < other_out and other_in < t_out
    if overlap or not feasible:
        val -= collision
    return val


@njit(cache=True, nogil=True)
def softmax2(v0, v1, beta):
    m = max(v0, v1)
    e0 = math.exp(beta * (v0 - m))
    e1 = math.exp(beta * (v1 - m))
    s = e0 + e1
    return e0 / s, e1 / s


@njit(cache=True, nogil=True)
def kalman_step(mean, cov, z_true, sigma, dt, q, eps):
    """Constant-velocity predict + position update, in place.

    ``mean = [d, v]`` with ``d' = -v``; ``cov = [p_dd, p_dv, p_vv]``;
    ``eps`` is a standard-normal draw for the observation noise.
    """
    p00, p01, p11 = cov[0], cov[1], cov[2]
    dt2 = dt * dt
    m0 = mean[0] - dt * mean[1]
    m1 = mean[1]
    p00 = p00 - 2.0 * dt * p01 + dt2 * p11 + q * dt2 * dt / 3.0
    p01 = p01 - dt * p11 - 0.5 * q * dt2
    p11 = p11 + q * dt
    r = sigma * sigma
    z = z_true + sigma * eps
    s = p00 + r
    if s <= 0.0:
        k0 = 1.0
        k1 = 0.0
    else:
        k0 = p00 / s
        k1 = p01 / s
    y = z - m0
    mean[0] = m0 + k0 * y
    mean[1] = m1 + k1 * y
    # Joseph form keeps the covariance symmetric PSD
    i00 = 1.0 - k0
    n00 = i00 * i00 * p00 + k0 * k0 * r
    n01 = i00 * (p01 - k1 * p00) + k0 * k1 * r
    n11 = p11 - 2.0 * k1 * p01 + k1 * k1 * p00 + k1 * k1 * r
    cov[0] = n00
    cov[1] = n01
    cov[2] = n11


@njit(cache=True, nogil=True)
def accumulate(acc, values, current, lam, sigma_acc, threshold, dt, eps):
    """Leaky accumulation of action values with threshold switching; returns the new action index."""
    na = acc.shape[0]
    scale = sigma_acc * math.sqrt(dt)
    for i in range(na):
        acc[i] = lam * acc[i] + (1.0 - lam) * values[i] + scale * eps[i]
    best = 0
    for i in range(1, na):
        if acc[i] > acc[best]:
            best = i
    if best != current and acc[best] - acc[current] > threshold:
        return best
    return current


@njit(cache=True, nogil=True)
def decide(
    d_self, v_self, a_self, len_self, prio_self,
    d_other, v_other, len_other, prio_other,
    params, cfg, actions, acc, current, eps,
    seg, weights_out, other_best_out, occ_buf,
):
    """One decision cycle of an agent: theory of mind, valuation, accumulation.

    Returns ``(new_action_index, pass_second_feasible)``. ``weights_out``
    receives the behaviour-weighted value per action and ``other_best_out``
    the other agent's best value per behaviour.
    """
    horizon = cfg[C_PLAN_HORIZON]
    v_min = cfg[C_V_MIN_CLEAR]
    collision = cfg[C_COLLISION]
    na = actions.shape[0]

    # own constant-velocity extrapolation, as the other is assumed to see it
    n = _push(seg, 0, 0.0, d_self, v_self, 0.0, 0.0)
    nom_in, nom_out, _, _ = summarize(seg, n, len_self, horizon, v_min)

    occ_in = occ_buf[0]
    occ_out = occ_buf[1]
    for b in range(2):
        best = -INF
        for i in range(na):
            n, ok = plan(seg, d_other, v_other, 0.0, actions[i], b, nom_in, nom_out, len_other, cfg)
            t_in, t_out, t_clear, effort = summarize(seg, n, len_other, horizon, v_min)
            val = value_of(t_in, t_out, t_clear, effort, ok, nom_in, nom_out, prio_other, params, collision)
            if val > best:
                best = val
                occ_in[b] = t_in
                occ_out[b] = t_out
        other_best_out[b] = best
    p0, p1 = softmax2(other_best_out[0], other_best_out[1], params[P_BETA])

    same_occ = occ_in[0] == occ_in[1] and occ_out[0] == occ_out[1]
    pass_second_ok = False
    for i in range(na):
        best = -INF
        for b_self in range(2):
            expected = 0.0
            for b in range(2):
                if b == 1 and same_occ:
                    expected += p1 * val
                    break
                n, ok = plan(seg, d_self, v_self, a_self, actions[i], b_self, occ_in[b], occ_out[b], len_self, cfg)
                t_in, t_out, t_clear, effort = summarize(seg, n, len_self, horizon, v_min)
                val = value_of(t_in, t_out, t_clear, effort, ok, occ_in[b], occ_out[b], prio_self, params, collision)
                expected += (p0 if b == 0 else p1) * val
                if b_self == SECOND and ok:
                    pass_second_ok = True
            if expected > best:
                best = expected
        weights_out[i] = best

    new = accumulate(acc, weights_out, current, params[P_LAMBDA], params[P_SIGMA_ACC],
                     params[P_THRESHOLD], cfg[C_DT], eps)
    return new, pass_second_ok


@njit(cache=True, nogil=True)
def _advance(seg, d, v, a, u, dt, cfg):
    if cfg[C_SCHEME] == SCHEME_AC:
        n, _, d1, v1, a1 = add_motion(seg, 0, 0.0, d, v, u, 0.0, dt, -INF, INF)
        a1 = u if v1 > 0.0 or u > 0.0 else 0.0
    else:
        a_max = cfg[C_A_MAX]
        n, _, d1, v1, a1 = add_motion(seg, 0, 0.0, d, v, a, u, dt, -a_max, a_max)
    return n, d1, v1, a1


@njit(cache=True, nogil=True)
def _crossings(seg, n, t_now, dt, length, t_entry, t_exit):
    if t_entry == INF:
        tau = cross_time(seg, n, -BOUNDARY_TOL, dt)
        if tau < INF:
            t_entry = t_now + tau
    if t_exit == INF:
        tau = cross_time(seg, n, -length, dt)
        if tau < INF:
            t_exit = t_now + tau
    return t_entry, t_exit


@njit(cache=True, nogil=True)
def _initial_times(d, v, length, horizon):
    if d <= -length:
        return 0.0, 0.0
    t_in = 0.0 if d <= -BOUNDARY_TOL else (max(d, 0.0) / v if v > 0.0 else INF)
    t_out = (d + length) / v if v > 0.0 else INF
    if t_in > horizon:
        t_in = INF
    if t_out > horizon:
        t_out = INF
    return t_in, t_out


@njit(cache=True, nogil=True)
def simulate_rollouts(init, lengths, params, cfg, actions, noise, times_out, stats_out, traj_out, ctrl_out):
    """Run one rollout per row of ``init`` (``[d_ego, v_ego, d_target, v_target]``).

    ``noise[j, k, agent]`` holds the standard-normal draws for rollout ``j``
    at step ``k``: index 0 perturbs the observation, the rest the action
    accumulators. Agent 0 is the target, agent 1 the ego. Trajectories are
    written only when ``traj_out`` has a non-empty first axis.
    """
    n_jobs = init.shape[0]
    n_steps = noise.shape[1]
    dt = cfg[C_DT]
    horizon = cfg[C_HORIZON]
    interactive = cfg[C_MODE] == MODE_IM
    outcome_only = cfg[C_OUTCOME_ONLY] != 0.0
    record = traj_out.shape[0] > 0
    sigma = params[P_SIGMA_OBS]
    q = cfg[C_PROCESS_NOISE]
    na = actions.shape[0]
    zero_idx = 0
    for i in range(na):
        if actions[i] == 0.0:
            zero_idx = i

    seg = np.zeros((MAX_SEGMENTS, 5))
    step_seg = np.zeros((MAX_SEGMENTS, 5))
    weights = np.zeros(na)
    other_best = np.zeros(2)
    occ_buf = np.zeros((2, 2))
    acc_t = np.zeros(na)
    acc_e = np.zeros(na)
    bel_t_mean = np.zeros(2)
    bel_t_cov = np.zeros(3)
    bel_e_mean = np.zeros(2)
    bel_e_cov = np.zeros(3)

    for job in range(n_jobs):
        d_e0 = init[job, 0]
        v_e0 = init[job, 1]
        d_e, v_e, a_e = d_e0, v_e0, 0.0
        d_t, v_t, a_t = init[job, 2], init[job, 3], 0.0
        len_e = lengths[job, 0]
        len_t = lengths[job, 1]

        # target's belief about the ego and vice versa
        bel_t_mean[0] = d_e
        bel_t_mean[1] = v_e
        bel_t_cov[0] = sigma * sigma
        bel_t_cov[1] = 0.0
        bel_t_cov[2] = cfg[C_P0_SPEED_VAR]
        bel_e_mean[0] = d_t
        bel_e_mean[1] = v_t
        bel_e_cov[0] = sigma * sigma
        bel_e_cov[1] = 0.0
        bel_e_cov[2] = cfg[C_P0_SPEED_VAR]
        acc_t[:] = 0.0
        acc_e[:] = 0.0
        cur_t = zero_idx
        cur_e = zero_idx
        switches_t = 0
        switches_e = 0
        pass2_always = True

        entry_e, exit_e = _initial_times(d_e, v_e, len_e, horizon)
        if interactive:
            if entry_e > 0.0:
                entry_e = INF
            if exit_e > 0.0:
                exit_e = INF
        entry_t, exit_t = _initial_times(d_t, v_t, len_t, 0.0)
        if entry_t > 0.0:
            entry_t = INF
        if exit_t > 0.0:
            exit_t = INF

        if record:
            traj_out[job, 0, 0] = d_e
            traj_out[job, 0, 1] = v_e
            traj_out[job, 0, 2] = a_e
            traj_out[job, 0, 3] = d_t
            traj_out[job, 0, 4] = v_t
            traj_out[job, 0, 5] = a_t

        k_done = n_steps
        for k in range(n_steps):
            t_now = k * dt
            if outcome_only:
                if entry_t < INF:
                    k_done = k
                    break
            elif exit_t < INF and exit_e < INF:
                k_done = k
                break

            if k > 0:
                kalman_step(bel_t_mean, bel_t_cov, d_e, sigma, dt, q, noise[job, k, 0, 0])
                if interactive:
                    kalman_step(bel_e_mean, bel_e_cov, d_t, sigma, dt, q, noise[job, k, 1, 0])

            new_t, ok2 = decide(
                d_t, v_t, a_t, len_t, False,
                bel_t_mean[0], bel_t_mean[1], len_e, True,
                params, cfg, actions, acc_t, cur_t, noise[job, k, 0, 1:],
                seg, weights, other_best, occ_buf,
            )
            if not ok2:
                pass2_always = False
            if new_t != cur_t:
                switches_t += 1
                cur_t = new_t
            if interactive:
                new_e, _ = decide(
                    d_e, v_e, a_e, len_e, True,
                    bel_e_mean[0], bel_e_mean[1], len_t, False,
                    params, cfg, actions, acc_e, cur_e, noise[job, k, 1, 1:],
                    seg, weights, other_best, occ_buf,
                )
                if new_e != cur_e:
                    switches_e += 1
                    cur_e = new_e

            u_t = actions[cur_t]
            n, d_t, v_t, a_t = _advance(step_seg, d_t, v_t, a_t, u_t, dt, cfg)
            entry_t, exit_t = _crossings(step_seg, n, t_now, dt, len_t, entry_t, exit_t)
            if interactive:
                u_e = actions[cur_e]
                n, d_e, v_e, a_e = _advance(step_seg, d_e, v_e, a_e, u_e, dt, cfg)
                entry_e, exit_e = _crossings(step_seg, n, t_now, dt, len_e, entry_e, exit_e)
            else:
                u_e = 0.0
                d_e = d_e0 - v_e0 * ((k + 1) * dt)

            if record:
                traj_out[job, k + 1, 0] = d_e
                traj_out[job, k + 1, 1] = v_e
                traj_out[job, k + 1, 2] = a_e
                traj_out[job, k + 1, 3] = d_t
                traj_out[job, k + 1, 4] = v_t
                traj_out[job, k + 1, 5] = a_t
                ctrl_out[job, k, 0] = u_t
                ctrl_out[job, k, 1] = u_e

        if record:
            # decisions stop once both agents are through; extrapolate at constant speed
            for k in range(k_done, n_steps):
                t_rel = (k + 1 - k_done) * dt
                if interactive:
                    traj_out[job, k + 1, 0] = traj_out[job, k_done, 0] - traj_out[job, k_done, 1] * t_rel
                else:
                    traj_out[job, k + 1, 0] = d_e0 - v_e0 * ((k + 1) * dt)
                traj_out[job, k + 1, 1] = traj_out[job, k_done, 1]
                traj_out[job, k + 1, 2] = 0.0
                traj_out[job, k + 1, 3] = traj_out[job, k_done, 3] - traj_out[job, k_done, 4] * t_rel
                traj_out[job, k + 1, 4] = traj_out[job, k_done, 4]
                traj_out[job, k + 1, 5] = 0.0
                ctrl_out[job, k, 0] = 0.0
                ctrl_out[job, k, 1] = 0.0

        times_out[job, O_ENTRY_EGO] = entry_e
        times_out[job, O_EXIT_EGO] = exit_e
        times_out[job, O_ENTRY_TARGET] = entry_t
        times_out[job, O_EXIT_TARGET] = exit_t
        stats_out[job, S_SWITCHES_TARGET] = switches_t
        stats_out[job, S_SWITCHES_EGO] = switches_e
        stats_out[job, S_PASS_SECOND_FEASIBLE] = 1.0 if pass2_always else 0.0
        stats_out[job, S_STEPS] = k_done
