"""Drift function, error exponents and closed-form bounds.

All logarithms are natural.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from .chain import RuleDistribution, _binomial_upper

QUAD_TOL = 1e-10


def _expected_tails(x: float, rules: RuleDistribution) -> tuple[float, float]:
    """(E[P(Z_x <= M-D)], E[P(Z_x >= D)]) with Z_x ~ Bin(M, x)."""
    y = 1.0 - x
    p1 = p2 = 0.0
    for rule, w in rules.entries:
        p1 += w * float(_binomial_upper(rule.m, y, x, rule.d))
        p2 += w * float(_binomial_upper(rule.m, x, y, rule.d))
    return p1, p2


def _g_at_zero(rules: RuleDistribution) -> float:
    # limit x -> 0: x * p1 / ((1-x) * p2) -> 1 / E[M; D = 1], infinite if no rule has d = 1
    denom = sum(w * r.m for r, w in rules.entries if r.d == 1)
    return math.inf if denom == 0 else 1.0 / denom


def g(x: float, rules: RuleDistribution) -> float:
    """Ratio of down-step to up-step probability at fraction ``x`` of ones."""
    if isinstance(rules, tuple):
        rules = RuleDistribution.single(*rules)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 0.0:
        return _g_at_zero(rules)
    if x == 1.0:
        return 1.0 / _g_at_zero(rules)
    p1, p2 = _expected_tails(x, rules)
    num = x * p1
    den = (1.0 - x) * p2
    assert num > 0 or den > 0, "both tails vanish"
    if den == 0.0:
        return math.inf
    return num / den


def log_g(x: float, rules: RuleDistribution) -> float:
    p1, p2 = _expected_tails(x, rules)
    return math.log(x) + math.log(p1) - math.log1p(-x) - math.log(p2)


def exponent_integral(alpha: float, rules: RuleDistribution) -> float:
    """Integral of log g over [alpha, 1/2]: the error-exponent bound."""
    if isinstance(rules, tuple):
        rules = RuleDistribution.single(*rules)
    if not rules.strict_majority_as:
        raise ValueError(f"exponent bound needs 2d > m for every rule, got {rules}")
    if not 0.0 < alpha <= 0.5:
        raise ValueError(f"alpha={alpha} outside (0, 1/2]")
    if alpha == 0.5:
        return 0.0
    val, _err = quad(log_g, alpha, 0.5, args=(rules,), epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return val


def binary_entropy(p: float) -> float:
    return -sum(q * math.log(q) for q in (p, 1.0 - p) if q > 0)


def kl_bernoulli(p: float) -> float:
    """D(p; 1/2) = log 2 - H(p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    return math.log(2.0) - binary_entropy(p)


def log_theorem1_bound(N: int, m: int, alpha: float, c: float = 1.0) -> float:
    if m < 2:
        raise ValueError(f"bound needs m >= 2, got m={m}")
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha={alpha} outside (0, 1/2)")
    return math.log(c) - (N - 1) * (m - 1) * kl_bernoulli(alpha)


def theorem1_bound(N: int, m: int, alpha: float, c: float = 1.0) -> float:
    """c * exp(-(N-1)(m-1) D(alpha; 1/2)), the (m,m) wrong-consensus bound."""
    return math.exp(log_theorem1_bound(N, m, alpha, c))


def mixture_g(x: float, p: float) -> float:
    """Closed-form drift ratio for (1,1) w.p. p mixed with (2,2)."""
    return (1.0 - (1.0 - p) * x) / (p + (1.0 - p) * x)


def mixture_rate_I(x: float, p: float) -> float:
    """Antiderivative of log g for the (1,1)/(2,2) mixture; the exponent is I(1/2) - I(x)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p={p} outside [0, 1)")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    q = 1.0 - p

    def xlogy(a, b):
        return 0.0 if a == 0.0 else a * math.log(b)

    return xlogy(x - 1.0 / q, 1.0 - q * x) - xlogy(x + p / q, p + q * x)


def mixture_exponent(x: float, p: float) -> float:
    if p == 1.0:
        return 0.0  # pure voter model, g == 1
    return mixture_rate_I(0.5, p) - mixture_rate_I(x, p)


def g_grid(rules: RuleDistribution, xs) -> np.ndarray:
    return np.array([g(float(x), rules) for x in xs])
