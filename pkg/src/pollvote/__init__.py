"""Polling majority-rule consensus on the complete graph: exact analysis and simulation."""

__version__ = "0.1.0"

from .chain import (
    ChainModel,
    PollingRule,
    RuleDistribution,
    SamplingMode,
    binomial_tail_ge,
    binomial_tail_le,
    build_chain,
    hypergeometric_tail_ge,
    load_rules,
)
from .solver import (
    SolveResult,
    expected_times,
    h_interpolated,
    hitting_probabilities,
    hitting_probability_mm_closed_form,
    log_h_interpolated,
    solve,
)
from .asymptotics import (
    exponent_integral,
    g,
    kl_bernoulli,
    mixture_rate_I,
    theorem1_bound,
)
from .simulate import (
    Engine,
    Estimate,
    SimConfig,
    SimOutcome,
    estimate,
    run_replicas,
    simulate_agent_level,
    simulate_aggregate,
)
from .dominating import (
    DominatingChain,
    build_dominating,
    check_domination,
    expected_visits,
    gambler_ruin_hit,
    tau0_upper_bound,
)
