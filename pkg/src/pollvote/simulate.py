"""Monte Carlo replicas of the polling consensus process.

Two engines share one configuration: ``AGGREGATE`` runs the count chain
directly from its rates, ``AGENT`` simulates every node's poll.  Replica ``k``
of a run with seed ``s`` draws from its own PCG64 stream seeded by
``SeedSequence(s, spawn_key=(k,))``, so outcomes are independent of
execution order and thread count.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import norm

from . import _kernels
from .chain import RuleDistribution, SamplingMode, build_chain
from .solver import alpha_boundaries

log = logging.getLogger(__name__)

MAX_AGENT_EVENTS = 10**9
MAX_CHAIN_EVENTS = 10**12
Z95 = float(norm.ppf(0.975))


class Engine(Enum):
    AGGREGATE = "aggregate"
    AGENT = "agent"


@dataclass(frozen=True)
class SimConfig:
    N: int
    rules: RuleDistribution
    initial_ones: int
    mode: SamplingMode = SamplingMode.WITH_REPLACEMENT
    alpha: float = 0.0
    replicas: int = 1000
    seed: int = 0
    engine: Engine = Engine.AGGREGATE
    max_time: float | None = None
    exclude_self: bool = False
    record_every: int = 0
    # experimental: each node keeps one rule for the whole run (agent engine only)
    per_node_rules: bool = False

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"N must be at least 2, got {self.N}")
        if not 0 <= self.initial_ones <= self.N:
            raise ValueError(f"initial_ones={self.initial_ones} outside [0, {self.N}]")
        if self.replicas < 1:
            raise ValueError(f"replicas must be >= 1, got {self.replicas}")
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError(f"alpha={self.alpha} outside [0, 1/2)")
        if self.max_time is not None and not self.max_time > 0:
            raise ValueError(f"max_time must be positive, got {self.max_time}")
        if self.per_node_rules and self.engine is not Engine.AGENT:
            raise ValueError("per_node_rules needs the agent engine")
        if self.mode is SamplingMode.WITHOUT_REPLACEMENT and self.rules.max_m > self.N - 1:
            raise ValueError(f"sampling without replacement needs m <= N-1, got m={self.rules.max_m}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def time_cutoff(self) -> float:
        if self.max_time is not None:
            return self.max_time
        return 100.0 * (1.0 + math.log(self.N))

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "rules": self.rules.to_records(),
            "initial_ones": self.initial_ones,
            "mode": self.mode.value,
            "alpha": self.alpha,
            "replicas": self.replicas,
            "seed": self.seed,
            "engine": self.engine.value,
            "max_time": self.time_cutoff,
            "exclude_self": self.exclude_self,
            "record_every": self.record_every,
            "per_node_rules": self.per_node_rules,
        }


@dataclass(frozen=True)
class SimOutcome:
    replica_index: int
    absorbed_value: int | None
    absorption_time: float
    alpha_exit_time: float
    event_count: int
    trajectory: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False, compare=False)

    @property
    def censored(self) -> bool:
        return self.absorbed_value is None


@dataclass(frozen=True)
class Estimate:
    point: float
    stderr: float
    ci95_low: float
    ci95_high: float
    n_samples: int


def replica_rng(seed: int, replica_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replica_index,))))


def _trajectory_buffers(config: SimConfig, expected_events: float):
    if config.record_every <= 0:
        return np.empty(0), np.empty(0, np.int64)
    cap = int(min(expected_events / config.record_every, 10**7)) + 2
    return np.empty(cap), np.empty(cap, np.int64)


def _outcome(config, replica_index, status, final, t, alpha_t, events, n_rec, traj_t, traj_x):
    if status == _kernels.ABSORBED:
        absorbed = 1 if final == config.N else 0
    else:
        absorbed = None
        log.warning("replica %d censored after %d events at t=%.3g", replica_index, events, t)
    traj = (traj_t[:n_rec].copy(), traj_x[:n_rec].copy()) if config.record_every > 0 else None
    return SimOutcome(replica_index, absorbed, float(t), float(alpha_t), int(events), traj)


class _AggregateRunner:
    def __init__(self, config: SimConfig):
        self.config = config
        chain = build_chain(config.N, config.rules, config.mode, config.exclude_self)
        self.up = np.ascontiguousarray(chain.up_rate)
        self.down = np.ascontiguousarray(chain.down_rate)
        self.lo, self.hi = alpha_boundaries(config.N, config.alpha)

    def __call__(self, replica_index: int) -> SimOutcome:
        c = self.config
        rng = replica_rng(c.seed, replica_index)
        traj_t, traj_x = _trajectory_buffers(c, 20.0 * c.N * (1 + math.log(c.N)))
        res = _kernels.birth_death_run(
            rng, self.up, self.down, c.initial_ones, self.lo, self.hi,
            c.time_cutoff, MAX_CHAIN_EVENTS, False, c.record_every, traj_t, traj_x,
        )
        return _outcome(c, replica_index, *res, traj_t, traj_x)


class _AgentRunner:
    def __init__(self, config: SimConfig):
        self.config = config
        self.ms = np.array([r.m for r in config.rules.rules], np.int64)
        self.ds = np.array([r.d for r in config.rules.rules], np.int64)
        self.cum = np.cumsum(config.rules.weights)
        self.lo, self.hi = alpha_boundaries(config.N, config.alpha)

    def __call__(self, replica_index: int) -> SimOutcome:
        c = self.config
        rng = replica_rng(c.seed, replica_index)
        state = np.zeros(c.N, np.int64)
        state[: c.initial_ones] = 1
        if c.per_node_rules:
            node_rule = np.searchsorted(self.cum, rng.random(c.N), side="right").clip(max=len(self.ms) - 1)
        else:
            node_rule = np.empty(0, np.int64)
        traj_t, traj_x = _trajectory_buffers(c, c.time_cutoff * c.N)
        res = _kernels.agent_run(
            rng, state, self.ms, self.ds, self.cum, node_rule.astype(np.int64),
            c.mode is SamplingMode.WITHOUT_REPLACEMENT, c.exclude_self, self.lo, self.hi,
            c.time_cutoff, MAX_AGENT_EVENTS, c.record_every, traj_t, traj_x,
        )
        return _outcome(c, replica_index, *res, traj_t, traj_x)


def _runner(config: SimConfig):
    return _AgentRunner(config) if config.engine is Engine.AGENT else _AggregateRunner(config)


def simulate_aggregate(config: SimConfig, replica_index: int = 0) -> SimOutcome:
    if config.engine is not Engine.AGGREGATE:
        raise ValueError("config requests the agent engine")
    return _AggregateRunner(config)(replica_index)


def simulate_agent_level(config: SimConfig, replica_index: int = 0) -> SimOutcome:
    if config.engine is not Engine.AGENT:
        raise ValueError("config requests the aggregate engine")
    return _AgentRunner(config)(replica_index)


def run_replicas(config: SimConfig, threads: int = 1, replicas: range | None = None) -> list[SimOutcome]:
    """Run all replicas (or the given index range), ordered by replica index."""
    run = _runner(config)
    indices = range(config.replicas) if replicas is None else replicas
    if threads <= 1:
        return [run(k) for k in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, indices, chunksize=max(1, len(indices) // (4 * threads))))


# ---------------------------------------------------------------------------
# estimation


def proportion_estimate(successes: int, n: int) -> Estimate:
    """Proportion with binomial standard error and a Wilson 95% interval."""
    if n < 1:
        raise ValueError("no samples")
    p = successes / n
    se = math.sqrt(p * (1 - p) / n)
    z2 = Z95**2
    centre = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = Z95 * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n)
    return Estimate(p, se, min(p, centre - half), max(p, centre + half), n)


def mean_estimate(values) -> Estimate:
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples for a standard error")
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(n))
    return Estimate(mean, se, mean - Z95 * se, mean + Z95 * se, n)


def estimate(outcomes: list[SimOutcome], wrong_value: int = 1) -> dict:
    """Summaries over completed replicas; censored ones are only counted.

    ``wrong_value`` is the consensus value counted as an error (1 when the
    initial ones are the minority, which is the convention for ``h_N``).
    """
    done = [o for o in outcomes if not o.censored]
    n_censored = len(outcomes) - len(done)
    if not done:
        raise ValueError("all replicas were censored")
    if len(done) < 2:
        raise ValueError("need at least two completed replicas")
    ones = sum(o.absorbed_value == 1 for o in done)
    wrong = sum(o.absorbed_value == wrong_value for o in done)
    alpha_times = [o.alpha_exit_time for o in done]
    return {
        "absorbed_at_N": proportion_estimate(ones, len(done)),
        "wrong_consensus": proportion_estimate(wrong, len(done)),
        "absorption_time": mean_estimate([o.absorption_time for o in done]),
        "alpha_exit_time": mean_estimate(alpha_times),
        "n_completed": len(done),
        "n_censored": n_censored,
    }


def summary_dict(config: SimConfig, outcomes: list[SimOutcome]) -> dict:
    wrong_value = 1 if 2 * config.initial_ones < config.N else 0
    est = estimate(outcomes, wrong_value)
    return {
        "config": config.to_dict(),
        "seed": config.seed,
        "wrong_value": wrong_value,
        "estimates": {k: asdict(v) if isinstance(v, Estimate) else v for k, v in est.items()},
    }


def outcomes_csv(outcomes: list[SimOutcome], header_lines: list[str] | None = None) -> str:
    buf = io.StringIO()
    for line in header_lines or ():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replica", "absorbed_value", "absorption_time", "alpha_exit_time", "event_count"])
    for o in outcomes:
        w.writerow(
            [
                o.replica_index,
                "" if o.absorbed_value is None else o.absorbed_value,
                repr(o.absorption_time),
                repr(o.alpha_exit_time),
                o.event_count,
            ]
        )
    return buf.getvalue()


def summary_json(config: SimConfig, outcomes: list[SimOutcome]) -> str:
    return json.dumps(summary_dict(config, outcomes), indent=2, sort_keys=True)
