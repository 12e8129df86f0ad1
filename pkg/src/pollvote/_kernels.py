"""Compiled inner loops for the Monte Carlo engines.

Every kernel takes a ``numpy.random.Generator`` owned by a single replica, so
results depend only on the generator's seed and not on scheduling.
"""

import numpy as np
from numba import njit

# status codes
ABSORBED = 0
CENSORED_TIME = 1
CENSORED_EVENTS = 2
STOPPED = 3

FLUSH_EVERY = 1024


@njit(nogil=True, cache=True)
def _flush(rng, visits, touched, n_touched, rate):
    # total holding time of all pending visits: v visits at rate q take Gamma(v) / q
    t = 0.0
    for k in range(n_touched):
        s = touched[k]
        t += rng.gamma(float(visits[s]), 1.0) / rate[s]
        visits[s] = 0
    return t


@njit(nogil=True, cache=True)
def birth_death_run(rng, up, down, start, lo, hi, max_time, max_events, stop_at_exit, record_every, traj_t, traj_x):
    """Run a birth-death chain until it reaches a zero-rate state.

    The jump chain is simulated step by step; holding times are drawn in
    aggregate per state (a sum of ``v`` Exp(q) variables is Gamma(v)/q), which
    is exact in law.  Steps run in blocks of at most ``FLUSH_EVERY`` jumps and
    pending visits are flushed into the clock at every block end, so the clock
    is exact at the alpha exit, at trajectory samples and at cutoff checks.

    Returns ``(status, final_state, time, alpha_time, events, n_recorded)``.
    """
    n_states = up.shape[0]
    rate = up + down
    p_up = np.zeros(n_states)
    for i in range(n_states):
        if rate[i] > 0.0:
            p_up[i] = up[i] / rate[i]
    visits = np.zeros(n_states, np.int64)
    touched = np.empty(FLUSH_EVERY, np.int64)
    x = start
    t = 0.0
    alpha_t = np.nan
    events = 0
    n_rec = 0
    cap = traj_t.shape[0]
    watch = True
    if x <= lo or x >= hi:
        alpha_t = 0.0
        watch = False
        if stop_at_exit:
            return STOPPED, x, 0.0, 0.0, 0, 0
    if record_every > 0 and cap > 0:
        traj_t[0] = 0.0
        traj_x[0] = x
        n_rec = 1
    while rate[x] > 0.0:
        block = FLUSH_EVERY
        if record_every > 0 and record_every - events % record_every < block:
            block = record_every - events % record_every
        if max_events - events < block:
            block = max_events - events
        n_touched = 0
        j = 0
        while j < block:
            if rate[x] == 0.0:
                break
            if visits[x] == 0:
                touched[n_touched] = x
                n_touched += 1
            visits[x] += 1
            if rng.random() < p_up[x]:
                x += 1
            else:
                x -= 1
            j += 1
            if watch and (x <= lo or x >= hi):
                break
        events += j
        t += _flush(rng, visits, touched, n_touched, rate)
        if watch and (x <= lo or x >= hi):
            watch = False
            alpha_t = t
            if stop_at_exit:
                return STOPPED, x, t, alpha_t, events, n_rec
        if record_every > 0 and events % record_every == 0 and n_rec < cap:
            traj_t[n_rec] = t
            traj_x[n_rec] = x
            n_rec += 1
        if rate[x] == 0.0:
            break
        if t > max_time:
            return CENSORED_TIME, x, t, alpha_t, events, n_rec
        if events >= max_events:
            return CENSORED_EVENTS, x, t, alpha_t, events, n_rec
    return ABSORBED, x, t, alpha_t, events, n_rec


@njit(nogil=True, cache=True)
def _pick_rule(rng, cum_weights):
    u = rng.random()
    k = 0
    last = cum_weights.shape[0] - 1
    while k < last and u >= cum_weights[k]:
        k += 1
    return k


@njit(nogil=True, cache=True)
def agent_run(
    rng, state, ms, ds, cum_weights, node_rule, without, exclude_self, lo, hi,
    max_time, max_events, record_every, traj_t, traj_x,
):
    """Simulate the node-level update process on the complete graph.

    ``state`` (0/1 per node) is modified in place.  One global Exp(N) clock
    picks a uniformly random node per event.  ``node_rule`` is either empty
    (fresh rule draw per update) or a per-node rule index.

    Returns ``(status, ones, time, alpha_time, events, n_recorded)``.
    """
    N = state.shape[0]
    ones = 0
    for v in range(N):
        ones += state[v]
    picked = np.empty(ms.max(), np.int64)
    t = 0.0
    alpha_t = np.nan
    events = 0
    n_rec = 0
    cap = traj_t.shape[0]
    status = ABSORBED
    if ones <= lo or ones >= hi:
        alpha_t = 0.0
    if record_every > 0 and cap > 0:
        traj_t[0] = 0.0
        traj_x[0] = ones
        n_rec = 1
    fixed = node_rule.shape[0] > 0
    while 0 < ones < N:
        t += rng.exponential(1.0) / N
        if t > max_time:
            status = CENSORED_TIME
            break
        v = rng.integers(0, N)
        k = node_rule[v] if fixed else _pick_rule(rng, cum_weights)
        m = ms[k]
        d = ds[k]
        count = 0
        if not without:
            for j in range(m):
                count += state[rng.integers(0, N)]
        else:
            pop = N - 1 if exclude_self else N
            j = 0
            while j < m:
                u = rng.integers(0, pop)
                if exclude_self and u >= v:
                    u += 1
                dup = False
                for r in range(j):
                    if picked[r] == u:
                        dup = True
                        break
                if dup:
                    continue
                picked[j] = u
                count += state[u]
                j += 1
        if state[v] == 0:
            if count >= d:
                state[v] = 1
                ones += 1
        elif m - count >= d:
            state[v] = 0
            ones -= 1
        events += 1
        if np.isnan(alpha_t) and (ones <= lo or ones >= hi):
            alpha_t = t
        if record_every > 0 and events % record_every == 0 and n_rec < cap:
            traj_t[n_rec] = t
            traj_x[n_rec] = ones
            n_rec += 1
        if events >= max_events:
            status = CENSORED_EVENTS
            break
    return status, ones, t, alpha_t, events, n_rec
