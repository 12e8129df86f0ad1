"""Exact absorption probabilities and expected times for birth-death chains.

Hitting probabilities use the series-resistor solution: with ``R_1 = 1`` and
``R_{i+1} / R_i = down[i] / up[i]``, the probability of reaching ``N`` from
``i`` is the voltage ``sum(R_1..R_i) / sum(R_1..R_N)``.  Everything is kept in
log space because the resistances overflow doubles for a few hundred nodes.

Expected times solve the first-step equations
``q[i] t[i] = 1 + up[i] t[i+1] + down[i] t[i-1]``.  Runs with positive rates use
the Green's function in log space; runs with one-way gates fall back to a
banded solve.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import gammaln, logsumexp

_SNAP = 1e-9


def floor_snap(v: float) -> int:
    r = round(v)
    return int(r) if abs(v - r) < _SNAP else math.floor(v)


def ceil_snap(v: float) -> int:
    r = round(v)
    return int(r) if abs(v - r) < _SNAP else math.ceil(v)


def alpha_boundaries(N: int, alpha: float) -> tuple[int, int]:
    """States at or beyond which the chain counts as within ``alpha`` of consensus."""
    return floor_snap(alpha * N), ceil_snap((1.0 - alpha) * N)


@dataclass(frozen=True)
class SolveResult:
    N: int
    log_resistor: np.ndarray | None = field(default=None, repr=False)
    h: np.ndarray | None = field(default=None, repr=False)
    log_h: np.ndarray | None = field(default=None, repr=False)
    t0: np.ndarray | None = field(default=None, repr=False)
    t_alpha: np.ndarray | None = field(default=None, repr=False)
    alpha: float | None = None

    def to_csv(self, header_lines: list[str] | None = None) -> str:
        return solve_result_csv(self, header_lines)


def _gates(up: np.ndarray, down: np.ndarray) -> tuple[int, int]:
    """Locate one-way states: zero up-rates must form a prefix, zero down-rates a suffix.

    Returns ``(lo, hi)`` such that states ``<= lo`` reach 0 surely and states
    ``>= hi`` reach ``N`` surely.  Positive-rate chains give ``(0, N)``.
    """
    N = len(up) - 1
    interior = np.arange(1, N)
    if np.any(up[1:N] < 0) or np.any(down[1:N] < 0):
        raise ValueError("negative transition rate")
    stuck = interior[(up[1:N] == 0) & (down[1:N] == 0)]
    if stuck.size:
        raise ValueError(f"interior state {int(stuck[0])} is absorbing")
    no_up = interior[up[1:N] == 0]
    no_down = interior[down[1:N] == 0]
    lo = int(no_up.max()) if no_up.size else 0
    hi = int(no_down.min()) if no_down.size else N
    if no_up.size and not np.all(up[1 : lo + 1] == 0):
        raise ValueError("zero up-rates do not form a prefix of the interior; resistor ratio undefined")
    if no_down.size and not np.all(down[hi:N] == 0):
        raise ValueError("zero down-rates do not form a suffix of the interior; resistor ratio undefined")
    if lo >= hi:
        raise ValueError("chain splits into disconnected pieces")
    return lo, hi


def hitting_probabilities(chain) -> SolveResult:
    """Probability of absorption at ``N`` from every state.

    ``chain`` is anything with ``N``, ``up_rate`` and ``down_rate``.  Interior
    zero rates are allowed only as one-way gates next to the boundaries (as
    produced by sampling without replacement): the resistor network is then
    solved between the gates.
    """
    N = chain.N
    up = np.asarray(chain.up_rate, dtype=float)
    down = np.asarray(chain.down_rate, dtype=float)
    lo, hi = _gates(up, down)

    # resistor k sits between states k-1 and k; only lo+1..hi carry current.
    # Build them outward from the middle resistor so that a symmetric chain
    # gets bitwise-mirrored values, and h(N/2) = 1/2 exactly.
    p, q = lo + 1, hi
    steps = np.zeros(N + 1)  # steps[k] = log(r_{k+1} / r_k)
    steps[p:q] = np.log(down[p:q]) - np.log(up[p:q])
    a = (p + q) // 2
    log_r = np.full(N + 1, -np.inf)
    log_r[a] = 0.0
    log_r[a + 1 : q + 1] = np.cumsum(steps[a:q])
    log_r[p:a] = -np.cumsum(steps[p:a][::-1])[::-1]

    seg = log_r[p : q + 1]
    below = np.logaddexp.accumulate(seg)  # resistance between lo and state k, k = p..q
    above = np.logaddexp.accumulate(seg[::-1])[::-1]  # resistance between state k-1 and hi
    log_h = np.full(N + 1, -np.inf)
    log_h[hi:] = 0.0
    # h = R_below / (R_below + R_above) = 1 / (1 + R_above / R_below), states p..q-1
    log_h[p:q] = -np.logaddexp(0.0, above[1:] - below[:-1])
    h = np.exp(log_h)
    return SolveResult(N, log_resistor=log_r, h=h, log_h=log_h)


def log_binom(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def log_hitting_probability_mm(N: int, m: int, i) -> np.ndarray | float:
    """Log of the (m,m) closed form: sum_{k<i} C(N-1,k)^(m-1) / sum_{k<N} C(N-1,k)^(m-1)."""
    if m < 2:
        raise ValueError(f"closed form needs m >= 2, got m={m}")
    i_arr = np.asarray(i)
    if np.any((i_arr < 0) | (i_arr > N)):
        raise ValueError(f"state {i} outside [0, {N}]")
    k = np.arange(N)
    terms = (m - 1) * log_binom(N - 1, k)
    prefix = np.concatenate(([-np.inf], np.logaddexp.accumulate(terms)))
    out = prefix[i_arr] - logsumexp(terms)
    return float(out) if out.ndim == 0 else out


def hitting_probability_mm_closed_form(N: int, m: int, i):
    return np.exp(log_hitting_probability_mm(N, m, i))


def log_h_interpolated(result: SolveResult, alpha: float) -> float:
    """Log of h_N(alpha), linearly interpolated between neighbouring states."""
    if result.log_h is None:
        raise ValueError("hitting probabilities not computed")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha={alpha} outside [0, 1]")
    N = result.N
    pos = alpha * N
    lo, hi = floor_snap(pos), ceil_snap(pos)
    if lo >= hi:
        return float(result.log_h[lo])
    w_hi = pos - lo
    return float(np.logaddexp(np.log(w_hi) + result.log_h[hi], np.log1p(-w_hi) + result.log_h[lo]))


def h_interpolated(result: SolveResult, alpha: float) -> float:
    return math.exp(log_h_interpolated(result, alpha))


def _green_apply(up: np.ndarray, down: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``sum_j G(i, j) f[j]`` for ``f >= 0`` on a run with absorbing neighbours.

    ``G`` is the birth-death Green's function written with resistor sums, so
    every term is positive and the log-space evaluation has no cancellation.
    """
    n = len(up)
    # resistors between consecutive states of the run extended by its two boundaries
    log_r = np.zeros(n + 1)
    log_r[1:] = np.cumsum(np.log(down) - np.log(up))
    log_s = np.logaddexp.accumulate(log_r)[:n]
    suffix = np.logaddexp.accumulate(log_r[::-1])[::-1]
    log_total = suffix[0]
    log_t = suffix[1:]
    with np.errstate(divide="ignore"):
        log_w = np.log(f) - np.log(up) - log_r[1:]
    left = np.logaddexp.accumulate(log_s + log_w)
    right = np.full(n, -np.inf)
    right[:-1] = np.logaddexp.accumulate((log_t + log_w)[::-1])[::-1][1:]
    return np.exp(np.logaddexp(log_t + left, log_s + right) - log_total)


def _green_times(up: np.ndarray, down: np.ndarray) -> np.ndarray:
    """Mean exit times of a run of positive-rate states.

    The banded solve loses all precision when times grow exponentially
    (rules with 2d <= m); the Green's function does not.  When the expected
    number of jumps is moderate, one refinement step through the Green's
    function removes the accumulated log-space rounding.  For long-lived
    chains the residual's own rounding, amplified by that jump count, would
    swamp the correction, so it is skipped.
    """
    n = len(up)
    q = up + down
    t = _green_apply(up, down, np.ones(n))
    jumps = _green_apply(up, down, q)
    if jumps.max() > 1e3 * n:
        return t
    ext = np.concatenate(([0.0], t, [0.0]))
    resid = 1.0 - (q * t - up * ext[2:] - down * ext[:-2])
    return t + _green_apply(up, down, np.maximum(resid, 0.0)) - _green_apply(up, down, np.maximum(-resid, 0.0))


def _banded_times(up: np.ndarray, down: np.ndarray) -> np.ndarray:
    q = up + down
    p_up = up / q
    p_down = down / q
    n = len(q)
    ab = np.zeros((3, n))
    ab[0, 1:] = -p_up[:-1]
    ab[1, :] = 1.0
    ab[2, :-1] = -p_down[1:]
    return solve_banded((1, 1), ab, 1.0 / q)


def _first_step_times(up: np.ndarray, down: np.ndarray, absorbing: np.ndarray) -> np.ndarray:
    n_states = len(up)
    t = np.zeros(n_states)
    free = np.flatnonzero(~absorbing)
    if free.size == 0:
        return t
    q = up + down
    if np.any(q[free] <= 0):
        raise ValueError("transient state with zero exit rate; system singular")
    # free states form runs between absorbing ones; solve each run separately
    breaks = np.flatnonzero(np.diff(free) > 1) + 1
    for run in np.split(free, breaks):
        a, b = run[0], run[-1]
        u, dn = up[a : b + 1], down[a : b + 1]
        if np.all(u > 0) and np.all(dn > 0):
            t[a : b + 1] = _green_times(u, dn)
        else:
            # one-way gates: every state drains towards a boundary, well conditioned
            t[a : b + 1] = _banded_times(u, dn)
    return t


def expected_times(chain, alpha: float = 0.0, result: SolveResult | None = None) -> SolveResult:
    """Expected time to consensus (``t0``) and to within ``alpha`` of it (``t_alpha``)."""
    if not 0.0 <= alpha < 0.5:
        raise ValueError(f"alpha={alpha} outside [0, 1/2)")
    N = chain.N
    up = np.asarray(chain.up_rate, dtype=float)
    down = np.asarray(chain.down_rate, dtype=float)
    states = np.arange(N + 1)
    t0 = _first_step_times(up, down, (states == 0) | (states == N))
    lo, hi = alpha_boundaries(N, alpha)
    t_alpha = _first_step_times(up, down, (states <= lo) | (states >= hi))
    if result is None:
        result = SolveResult(N)
    return replace(result, t0=t0, t_alpha=t_alpha, alpha=alpha)


def solve(chain, alpha: float = 0.0) -> SolveResult:
    return expected_times(chain, alpha, hitting_probabilities(chain))


def solve_result_csv(result: SolveResult, header_lines: list[str] | None = None) -> str:
    buf = io.StringIO()
    for line in header_lines or ():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "x", "h", "log_h", "t0", "t_alpha"])
    N = result.N
    for i in range(N + 1):
        w.writerow(
            [
                i,
                repr(i / N),
                repr(float(result.h[i])) if result.h is not None else "",
                repr(float(result.log_h[i])) if result.log_h is not None else "",
                repr(float(result.t0[i])) if result.t0 is not None else "",
                repr(float(result.t_alpha[i])) if result.t_alpha is not None else "",
            ]
        )
    return buf.getvalue()
