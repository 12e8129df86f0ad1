"""Polling rules and the birth-death chain they induce on the complete graph.

The state of the system is the number ``n`` of nodes holding value 1.  A node
holding 0 moves to 1 when at least ``d`` of its ``m`` polled peers hold 1, and
symmetrically for a node holding 1, so the count moves up at rate
``(N - n) * P(Z >= d)`` and down at rate ``n * P(Z' >= d)`` where ``Z`` counts
ones and ``Z'`` counts zeros in the poll.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

MAX_POLL_SIZE = 64
WEIGHT_TOL = 1e-12


@dataclass(frozen=True, order=True)
class PollingRule:
    """Poll ``m`` peers, flip if at least ``d`` of them disagree."""

    m: int
    d: int

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and isinstance(self.d, (int, np.integer))):
            raise TypeError(f"m and d must be integers, got {self.m!r}, {self.d!r}")
        if not 1 <= self.d <= self.m:
            raise ValueError(f"need 1 <= d <= m, got m={self.m}, d={self.d}")
        if self.m > MAX_POLL_SIZE:
            raise ValueError(f"poll size m={self.m} exceeds cap {MAX_POLL_SIZE}")

    @property
    def strict_majority(self) -> bool:
        return 2 * self.d > self.m

    @classmethod
    def parse(cls, text: str) -> "PollingRule":
        m, d = text.split(":")
        return cls(int(m), int(d))

    def __str__(self):
        return f"({self.m},{self.d})"


@dataclass(frozen=True)
class RuleDistribution:
    """Finite distribution over polling rules; a fresh rule is drawn per update."""

    entries: tuple[tuple[PollingRule, float], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("rule distribution is empty")
        seen = set()
        for rule, w in self.entries:
            if not isinstance(rule, PollingRule):
                raise TypeError(f"expected PollingRule, got {rule!r}")
            if not w > 0:
                raise ValueError(f"weight for {rule} must be strictly positive, got {w}")
            if rule in seen:
                raise ValueError(f"duplicate rule {rule}")
            seen.add(rule)
        total = math.fsum(w for _, w in self.entries)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")

    @classmethod
    def single(cls, m: int, d: int) -> "RuleDistribution":
        return cls(((PollingRule(m, d), 1.0),))

    @classmethod
    def of(cls, pairs: Iterable[tuple[PollingRule | tuple[int, int], float]]) -> "RuleDistribution":
        entries = []
        for rule, w in pairs:
            if not isinstance(rule, PollingRule):
                rule = PollingRule(*rule)
            entries.append((rule, float(w)))
        return cls(tuple(entries))

    @classmethod
    def mixture(cls, p: float) -> "RuleDistribution":
        """(1,1) with probability ``p``, (2,2) otherwise."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"mixing probability must lie in [0, 1], got {p}")
        pairs = [((1, 1), p), ((2, 2), 1.0 - p)]
        return cls.of((r, w) for r, w in pairs if w > 0)

    @property
    def rules(self) -> list[PollingRule]:
        return [r for r, _ in self.entries]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.entries])

    @property
    def max_m(self) -> int:
        return max(r.m for r in self.rules)

    @property
    def strict_majority_as(self) -> bool:
        return all(r.strict_majority for r in self.rules)

    @property
    def is_degenerate(self) -> bool:
        return len(self.entries) == 1

    def to_records(self) -> list[dict]:
        return [{"m": r.m, "d": r.d, "weight": w} for r, w in self.entries]

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "RuleDistribution":
        if isinstance(records, dict):
            records = [records]
        records = list(records)
        if not records:
            raise ValueError("no rule records given")
        if len(records) == 1 and "weight" not in records[0]:
            rec = records[0]
            return cls.single(int(rec["m"]), int(rec["d"]))
        pairs = []
        for rec in records:
            if "weight" not in rec:
                raise ValueError(f"rule record {rec} lacks a weight")
            pairs.append(((int(rec["m"]), int(rec["d"])), float(rec["weight"])))
        return cls.of(pairs)

    def __str__(self):
        if self.is_degenerate:
            return str(self.rules[0])
        return " + ".join(f"{w:g}*{r}" for r, w in self.entries)


def load_rules(path: str | Path) -> RuleDistribution:
    """Read a rule distribution from a YAML or JSON file.

    The file holds either a list of ``{m, d, weight}`` records, a single
    ``{m, d}`` record, or a mapping with a ``rules`` key holding either.
    """
    import yaml  # JSON is a subset of YAML

    with open(path) as fh:
        data = yaml.safe_load(fh)
    if isinstance(data, dict) and "rules" in data:
        data = data["rules"]
    return RuleDistribution.from_records(data)


class SamplingMode(Enum):
    WITH_REPLACEMENT = "with"
    WITHOUT_REPLACEMENT = "without"


# ---------------------------------------------------------------------------
# tail probabilities


def _check_prob(x):
    x = np.asarray(x, dtype=float)
    if np.any(~((x >= 0.0) & (x <= 1.0))):
        raise ValueError(f"probability outside [0, 1]: {x}")
    return x


def _binomial_upper(m: int, x, y, d: int):
    # P(Bin(m, x) >= d) with y = 1 - x supplied by the caller, summed from k = d up
    total = np.zeros(np.shape(x))
    for k in range(d, m + 1):
        total = total + math.comb(m, k) * x**k * y ** (m - k)
    return total


def binomial_tail_ge(m: int, x, d: int):
    """P(Z >= d) for Z ~ Binomial(m, x), by direct summation."""
    x = _check_prob(x)
    if not 0 <= d <= m:
        raise ValueError(f"threshold d={d} outside [0, {m}]")
    out = _binomial_upper(m, x, 1.0 - x, d)
    return float(out) if out.ndim == 0 else out


def binomial_tail_le(m: int, x, d: int):
    """P(Z <= d) for Z ~ Binomial(m, x), by direct summation."""
    x = _check_prob(x)
    if not -1 <= d <= m:
        raise ValueError(f"threshold d={d} outside [-1, {m}]")
    y = 1.0 - x
    total = np.zeros(np.shape(x))
    for k in range(0, d + 1):
        total = total + math.comb(m, k) * x**k * y ** (m - k)
    return float(total) if total.ndim == 0 else total


def _log_comb(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    with np.errstate(invalid="ignore"):
        out = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return np.where((k < 0) | (k > n), -np.inf, out)


def _hypergeom_upper(pop: int, ones, m: int, d: int):
    ones = np.asarray(ones, dtype=float)
    log_norm = _log_comb(pop, m)
    total = np.zeros(ones.shape)
    for k in range(d, m + 1):
        total = total + np.exp(_log_comb(ones, k) + _log_comb(pop - ones, m - k) - log_norm)
    return total


def hypergeometric_tail_ge(N: int, ones, m: int, d: int):
    """P(at least ``d`` ones in ``m`` draws without replacement from ``N`` items, ``ones`` of them ones)."""
    ones_arr = np.asarray(ones)
    if m > N or m < 0:
        raise ValueError(f"cannot draw m={m} from a population of {N}")
    if np.any((ones_arr < 0) | (ones_arr > N)):
        raise ValueError(f"ones={ones} outside [0, {N}]")
    if not 0 <= d <= m:
        raise ValueError(f"threshold d={d} outside [0, {m}]")
    out = _hypergeom_upper(N, ones_arr, m, d)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# the chain


@dataclass(frozen=True)
class ChainModel:
    N: int
    rules: RuleDistribution | None
    mode: SamplingMode
    up_rate: np.ndarray = field(repr=False)
    down_rate: np.ndarray = field(repr=False)
    exclude_self: bool = False

    @property
    def total_rate(self) -> np.ndarray:
        return self.up_rate + self.down_rate


def flip_probability_table(
    N: int,
    rules: RuleDistribution,
    mode: SamplingMode = SamplingMode.WITH_REPLACEMENT,
    exclude_self: bool = False,
) -> np.ndarray:
    """``T[k]``: chance an updating node flips when ``k`` nodes hold the opposite value.

    Up and down rates are both read off this one table (``up[n] = (N-n) T[n]``,
    ``down[n] = n T[N-n]``), which makes the 0/1 relabelling symmetry exact.
    """
    k = np.arange(N + 1)
    table = np.zeros(N + 1)
    for rule, w in rules.entries:
        if mode is SamplingMode.WITH_REPLACEMENT:
            part = _binomial_upper(rule.m, k / N, (N - k) / N, rule.d)
        elif exclude_self:
            # the opposite-valued nodes all lie outside the updating node
            part = _hypergeom_upper(N - 1, np.minimum(k, N - 1), rule.m, rule.d)
        else:
            part = _hypergeom_upper(N, k, rule.m, rule.d)
        table = table + w * part
    return table


def build_chain(
    N: int,
    rules: RuleDistribution,
    mode: SamplingMode = SamplingMode.WITH_REPLACEMENT,
    exclude_self: bool = False,
) -> ChainModel:
    """Rates of the count chain for population ``N`` under ``rules``.

    ``exclude_self`` only matters without replacement: the updating node then
    samples from the other ``N - 1`` nodes instead of all ``N``.
    """
    if isinstance(rules, PollingRule):
        rules = RuleDistribution(((rules, 1.0),))
    if N < 2:
        raise ValueError(f"population must have at least 2 nodes, got N={N}")
    if mode is SamplingMode.WITHOUT_REPLACEMENT and rules.max_m > N - 1:
        raise ValueError(f"sampling without replacement needs m <= N-1, got m={rules.max_m}, N={N}")
    table = flip_probability_table(N, rules, mode, exclude_self)
    n = np.arange(N + 1)
    up = (N - n) * table
    down = n * table[::-1]
    up[0] = down[0] = up[N] = down[N] = 0.0
    return ChainModel(N, rules, mode, up, down, exclude_self)
