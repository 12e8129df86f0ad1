"""Three-region dominating chain and the logarithmic consensus-time bound.

The dominating chain ``Y`` on ``{0..N}`` drifts outward with probability
``beta`` below ``(1-eps)N/2`` (and symmetrically above ``(1+eps)N/2``) and is
a symmetric walk in the central band.  Holding rates are ``c1*i`` in the lower
region, ``c2*N`` in the band and ``c1*(N-i)`` in the upper region.  Folding
``min(Y, N-Y)`` gives a chain absorbed only at 0 whose absorption time
stochastically dominates that of the folded consensus process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ks_2samp

from . import _kernels
from .chain import PollingRule, RuleDistribution, SamplingMode, _binomial_upper, build_chain
from .simulate import mean_estimate, replica_rng

_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class BirthDeath:
    """Bare rate arrays; accepted by the exact solver."""

    N: int
    up_rate: np.ndarray = field(repr=False)
    down_rate: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DominatingChain:
    N: int
    epsilon: float
    beta: float
    c1: float
    c2: float
    jump_prob_down: np.ndarray = field(repr=False)
    holding_rate: np.ndarray = field(repr=False)

    @property
    def lower_edge(self) -> float:
        return (1.0 - self.epsilon) * self.N / 2

    @property
    def band_entry(self) -> int:
        """Lowest band state, ceil((1-eps)N/2)."""
        return _ceil(self.lower_edge)

    def region(self, i: int) -> str:
        return _region(i, self.N, self.epsilon)

    def as_chain(self) -> BirthDeath:
        down = self.holding_rate * self.jump_prob_down
        up = self.holding_rate * (1.0 - self.jump_prob_down)
        up[0] = down[0] = up[self.N] = down[self.N] = 0.0
        return BirthDeath(self.N, up, down)


def _ceil(v: float) -> int:
    r = round(v)
    return int(r) if abs(v - r) < _EDGE_TOL else math.ceil(v)


def _region(i: int, N: int, eps: float) -> str:
    lo_edge = (1.0 - eps) * N / 2
    hi_edge = (1.0 + eps) * N / 2
    if i < lo_edge - _EDGE_TOL:
        return "lower"
    if i > hi_edge + _EDGE_TOL:
        return "upper"
    return "band"


def dominating_constants(epsilon: float, rule: PollingRule) -> tuple[float, float]:
    """``c1 = P(Z <= m-d)`` and ``c2 = P(Z >= d)`` for ``Z ~ Bin(m, (1-eps)/2)``."""
    x = (1.0 - epsilon) / 2
    y = (1.0 + epsilon) / 2
    c1 = float(_binomial_upper(rule.m, y, x, rule.d))
    c2 = float(_binomial_upper(rule.m, x, y, rule.d))
    return c1, c2


def outer_beta(epsilon: float, c1: float, c2: float) -> float:
    """Down-jump probability of the folded consensus chain at the band's lower edge."""
    return (1.0 - epsilon) * c1 / ((1.0 - epsilon) * c1 + (1.0 + epsilon) * c2)


def printed_beta(epsilon: float, c1: float, c2: float) -> float:
    """The variant with c1 and c2 the other way round; below 1/2 for (2,2), kept for reference."""
    return (1.0 - epsilon) * c2 / ((1.0 - epsilon) * c2 + (1.0 + epsilon) * c1)


def build_dominating(N: int, epsilon: float, rule: PollingRule) -> DominatingChain:
    if isinstance(rule, tuple):
        rule = PollingRule(*rule)
    if not rule.strict_majority:
        raise ValueError(f"dominating chain needs 2d > m, got {rule}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon={epsilon} outside (0, 1)")
    if N < 2:
        raise ValueError(f"N={N} too small")
    c1, c2 = dominating_constants(epsilon, rule)
    beta = outer_beta(epsilon, c1, c2)
    assert beta > 0.5, f"beta={beta} not above 1/2"

    p_down = np.empty(N + 1)
    hold = np.empty(N + 1)
    for i in range(N + 1):
        reg = _region(i, N, epsilon)
        if reg == "lower":
            p_down[i], hold[i] = beta, c1 * i
        elif reg == "upper":
            p_down[i], hold[i] = 1.0 - beta, c1 * (N - i)
        else:
            p_down[i], hold[i] = 0.5, c2 * N
    p_down[0], p_down[N] = 1.0, 0.0
    hold[0] = hold[N] = 0.0
    return DominatingChain(N, epsilon, beta, c1, c2, p_down, hold)


def fold(chain) -> BirthDeath:
    """Chain of ``min(X, N-X)`` on ``{0..floor(N/2)}``.

    At the top state ``K = floor(N/2)`` both moves of an even-``N`` chain land
    on ``K-1``; for odd ``N`` the upward move maps back onto ``K`` and is
    dropped (censored), leaving only the down rate.
    """
    N = chain.N
    K = N // 2
    up = np.array(chain.up_rate[: K + 1], dtype=float)
    down = np.array(chain.down_rate[: K + 1], dtype=float)
    if N % 2 == 0:
        down[K] = chain.up_rate[K] + chain.down_rate[K]
    up[K] = 0.0
    return BirthDeath(K, up, down)


def gambler_ruin_hit(i: int, j: int, beta: float) -> float:
    """Probability that a walk stepping down w.p. ``beta`` reaches ``j`` before 0 from ``i``."""
    if i < 0 or j <= 0:
        raise ValueError(f"need i >= 0 and j > 0, got i={i}, j={j}")
    if i >= j:
        return 1.0
    if i == 0:
        return 0.0
    if beta == 0.5:
        return i / j
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta={beta} outside (0, 1)")
    # ratio of (r^i - 1)/(r^j - 1) with log r kept exact for large exponents
    log_r = math.log(beta) - math.log1p(-beta)
    if log_r > 0:
        return math.exp((i - j) * log_r) * (-math.expm1(-i * log_r)) / (-math.expm1(-j * log_r))
    return math.expm1(i * log_r) / math.expm1(j * log_r)


def expected_visits(j: int, beta: float) -> float:
    """Mean number of visits to ``j`` before absorption at 0, given ``j`` is reached."""
    if not 0.5 < beta < 1.0:
        raise ValueError(f"beta={beta} outside (1/2, 1)")
    if j < 1:
        raise ValueError(f"j={j} must be positive")
    q = (1.0 - beta) / beta
    n = -math.expm1(j * math.log(q)) / (2.0 * beta - 1.0)
    assert n <= 1.0 / (2.0 * beta - 1.0)
    return n


def tau0_upper_bound(chain: DominatingChain) -> float:
    """(1/(2 beta - 1)) * (sum_{j < ceil((1-eps)N/2)} 1/(j c1) + eps/c2)."""
    top = chain.band_entry - 1
    harmonic = math.fsum(1.0 / j for j in range(1, top + 1))
    return (harmonic / chain.c1 + chain.epsilon / chain.c2) / (2.0 * chain.beta - 1.0)


# ---------------------------------------------------------------------------
# simulation of folded chains


def first_passage_samples(
    folded: BirthDeath,
    start: int,
    level: int,
    replicas: int,
    seed: int,
    stop_at_level: bool = False,
    max_time: float = math.inf,
) -> tuple[np.ndarray, np.ndarray]:
    """Absorption times at 0 and first times at or below ``level`` for a folded chain.

    With ``stop_at_level`` the run ends at the level crossing and the first
    array repeats the crossing times.
    """
    up = np.ascontiguousarray(folded.up_rate)
    down = np.ascontiguousarray(folded.down_rate)
    absorb = np.empty(replicas)
    cross = np.empty(replicas)
    empty_t, empty_x = np.empty(0), np.empty(0, np.int64)
    for k in range(replicas):
        status, _x, t, t_level, _ev, _ = _kernels.birth_death_run(
            replica_rng(seed, k), up, down, start, level, folded.N + 1,
            max_time, 10**12, stop_at_level, 0, empty_t, empty_x,
        )
        if status in (_kernels.CENSORED_TIME, _kernels.CENSORED_EVENTS):
            raise RuntimeError(f"replica {k} censored at t={t}")
        absorb[k] = t
        cross[k] = t_level
    return absorb, cross


def band_excursion_samples(chain: DominatingChain, replicas: int, seed: int) -> np.ndarray:
    """Times for the folded ``Y`` to leave the central band after entering at its lower edge."""
    folded = fold(chain.as_chain())
    entry = chain.band_entry
    _, cross = first_passage_samples(folded, entry, entry - 1, replicas, seed, stop_at_level=True)
    return cross


def consensus_chain(N: int, rule: PollingRule):
    return build_chain(N, RuleDistribution(((rule, 1.0),)), SamplingMode.WITH_REPLACEMENT)


def coupling_inequalities(N: int, epsilon: float, rule: PollingRule) -> dict:
    """Grid check of the two rate comparisons between folded X and folded Y.

    For every state ``1 <= i <= floor(N/2)``: the down-jump probability of
    folded X is at least that of folded Y, and its total exit rate is at
    least Y's holding rate.
    """
    if isinstance(rule, tuple):
        rule = PollingRule(*rule)
    dom = build_dominating(N, epsilon, rule)
    fx = fold(consensus_chain(N, rule))
    fy = fold(dom.as_chain())
    states = np.arange(1, fx.N + 1)
    qx = fx.up_rate[states] + fx.down_rate[states]
    qy = fy.up_rate[states] + fy.down_rate[states]
    px = fx.down_rate[states] / qx
    py = fy.down_rate[states] / qy
    # relative slack for floating noise where the two are equal at the band edge
    tol = 1e-12
    jump_ok = px >= py * (1 - tol)
    rate_ok = qx >= qy * (1 - tol)
    return {
        "states_checked": int(states.size),
        "jump_prob_ok": bool(jump_ok.all()),
        "exit_rate_ok": bool(rate_ok.all()),
        "jump_prob_violations": [int(i) for i in states[~jump_ok]],
        "exit_rate_violations": [int(i) for i in states[~rate_ok]],
        "min_jump_margin": float((px - py).min()),
        "min_rate_ratio": float((qx / qy).min()),
    }


def check_domination(
    N: int,
    epsilon: float,
    rule: PollingRule,
    replicas: int,
    seed: int,
    start: int | None = None,
    alpha: float = 0.1,
    significance: float = 0.01,
) -> dict:
    """Simulate folded X and folded Y from the same start and compare their laws.

    The absorption-time CDF of X should lie above Y's everywhere; this is
    tested one-sidedly (null: X stochastically no larger than Y).  The same
    is done for the first passage to ``floor(alpha N)``.
    """
    if isinstance(rule, tuple):
        rule = PollingRule(*rule)
    dom = build_dominating(N, epsilon, rule)
    if start is None:
        start = N // 3
    if not 0 < start < dom.lower_edge:
        raise ValueError(f"start={start} must lie in (0, (1-eps)N/2)")
    level = math.floor(alpha * N)
    fx = fold(consensus_chain(N, rule))
    fy = fold(dom.as_chain())
    ax, lx = first_passage_samples(fx, start, level, replicas, seed)
    ay, ly = first_passage_samples(fy, start, level, replicas, seed + 1)

    def compare(x, y):
        # "less": alternative is CDF_x < CDF_y somewhere, i.e. x not stochastically smaller
        test = ks_2samp(x, y, alternative="less")
        ex, ey = mean_estimate(x), mean_estimate(y)
        return {
            "mean_x": ex.point,
            "stderr_x": ex.stderr,
            "mean_y": ey.point,
            "stderr_y": ey.stderr,
            "ks_statistic": float(test.statistic),
            "p_value": float(test.pvalue),
            "dominated": bool(test.pvalue > significance),
        }

    absorption = compare(ax, ay)
    passage = compare(lx, ly)
    return {
        "N": N,
        "epsilon": epsilon,
        "rule": {"m": rule.m, "d": rule.d},
        "start": start,
        "alpha_level": level,
        "replicas": replicas,
        "seed": seed,
        "beta": dom.beta,
        "c1": dom.c1,
        "c2": dom.c2,
        "tau0_upper_bound": tau0_upper_bound(dom),
        "coupling_inequalities": coupling_inequalities(N, epsilon, rule),
        "absorption": absorption,
        "alpha_passage": passage,
        "verdict": "dominated" if absorption["dominated"] and passage["dominated"] else "violation",
    }
