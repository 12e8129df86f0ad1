import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pollvote.chain import (
    PollingRule,
    RuleDistribution,
    SamplingMode,
    binomial_tail_ge,
    binomial_tail_le,
    build_chain,
    hypergeometric_tail_ge,
    load_rules,
)
from oracles import binomial_tail_enum, hypergeom_tail_enum

WITHOUT = SamplingMode.WITHOUT_REPLACEMENT


class TestPollingRule:
    def test_strict_majority(self):
        assert PollingRule(3, 2).strict_majority
        assert PollingRule(2, 2).strict_majority
        assert not PollingRule(4, 2).strict_majority
        assert PollingRule(1, 1).strict_majority

    @pytest.mark.parametrize("m,d", [(2, 3), (2, 0), (0, 0), (65, 40)])
    def test_rejects_bad_pairs(self, m, d):
        with pytest.raises(ValueError):
            PollingRule(m, d)

    def test_parse(self):
        assert PollingRule.parse("3:2") == PollingRule(3, 2)


class TestRuleDistribution:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            RuleDistribution.of([((1, 1), 0.5), ((2, 2), 0.4)])

    def test_weights_strictly_positive(self):
        with pytest.raises(ValueError):
            RuleDistribution.of([((1, 1), 1.0), ((2, 2), 0.0)])

    def test_sum_tolerance(self):
        RuleDistribution.of([((1, 1), 0.1), ((2, 2), 0.2), ((3, 2), 0.7)])

    def test_strict_majority_as(self):
        assert RuleDistribution.of([((2, 2), 0.5), ((3, 2), 0.5)]).strict_majority_as
        assert not RuleDistribution.of([((2, 2), 0.5), ((4, 2), 0.5)]).strict_majority_as

    def test_mixture_drops_zero_weights(self):
        assert RuleDistribution.mixture(0.0).rules == [PollingRule(2, 2)]
        assert RuleDistribution.mixture(1.0).rules == [PollingRule(1, 1)]
        assert len(RuleDistribution.mixture(0.3).entries) == 2

    def test_records_roundtrip(self, tmp_path):
        dist = RuleDistribution.of([((1, 1), 0.25), ((2, 2), 0.75)])
        path = tmp_path / "rules.json"
        path.write_text(json.dumps(dist.to_records()))
        assert load_rules(path) == dist

    def test_single_record_implies_weight_one(self, tmp_path):
        path = tmp_path / "rules.yaml"
        path.write_text("m: 3\nd: 2\n")
        assert load_rules(path) == RuleDistribution.single(3, 2)

    def test_record_list_without_weights_rejected(self):
        with pytest.raises(ValueError):
            RuleDistribution.from_records([{"m": 1, "d": 1}, {"m": 2, "d": 2}])


class TestBinomialTail:
    def test_examples(self):
        assert binomial_tail_ge(2, 0.5, 2) == 0.25
        assert binomial_tail_ge(3, 0.0, 1) == 0.0
        assert binomial_tail_ge(3, 0.3, 2) == pytest.approx(0.216, abs=1e-15)

    @pytest.mark.parametrize("m", [1, 2, 3, 5, 8])
    @pytest.mark.parametrize("x", [0.0, 0.1, 1 / 3, 0.5, 0.9, 1.0])
    def test_against_enumeration(self, m, x):
        for d in range(m + 1):
            assert binomial_tail_ge(m, x, d) == pytest.approx(binomial_tail_enum(m, x, d), abs=1e-14)

    @pytest.mark.parametrize("x,d", [(-0.1, 1), (1.5, 1), (0.5, 4), (0.5, -1)])
    def test_domain_errors(self, x, d):
        with pytest.raises(ValueError):
            binomial_tail_ge(3, x, d)

    @given(
        m=st.integers(1, 40),
        x=st.floats(0, 1),
        data=st.data(),
    )
    def test_complementarity(self, m, x, data):
        d = data.draw(st.integers(0, m))
        assert binomial_tail_ge(m, x, d) + binomial_tail_le(m, x, d - 1) == pytest.approx(1.0, abs=1e-12)

    def test_vectorised(self):
        xs = np.linspace(0, 1, 11)
        out = binomial_tail_ge(4, xs, 3)
        assert out.shape == (11,)
        assert out[0] == 0.0 and out[-1] == 1.0


class TestHypergeometricTail:
    def test_examples(self):
        assert hypergeometric_tail_ge(4, 2, 2, 2) == pytest.approx(1 / 6, rel=1e-12)
        assert hypergeometric_tail_ge(10, 10, 3, 1) == pytest.approx(1.0, rel=1e-12)
        exact = 300 * 299 / (1000 * 999)
        val = hypergeometric_tail_ge(1000, 300, 2, 2)
        assert val == pytest.approx(exact, rel=1e-11)
        assert abs(val - binomial_tail_ge(2, 0.3, 2)) < 2e-3

    @pytest.mark.parametrize("N,m", [(6, 2), (7, 3), (8, 4)])
    def test_against_enumeration(self, N, m):
        for ones in range(N + 1):
            for d in range(m + 1):
                assert hypergeometric_tail_ge(N, ones, m, d) == pytest.approx(
                    float(hypergeom_tail_enum(N, ones, m, d)), abs=1e-13
                )

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            hypergeometric_tail_ge(5, 6, 2, 1)
        with pytest.raises(ValueError):
            hypergeometric_tail_ge(5, 2, 6, 1)
        with pytest.raises(ValueError):
            hypergeometric_tail_ge(5, 2, 2, 3)

    def test_converges_to_binomial(self):
        diffs = []
        for N in (100, 1000, 10000):
            ones = int(0.3 * N)
            diffs.append(abs(hypergeometric_tail_ge(N, ones, 3, 2) - binomial_tail_ge(3, 0.3, 2)))
        assert diffs[0] > diffs[1] > diffs[2]


class TestBuildChain:
    def test_voter_n3(self):
        c = build_chain(3, RuleDistribution.single(1, 1))
        assert c.up_rate[1] == pytest.approx(2 / 3)
        assert c.down_rate[1] == pytest.approx(2 / 3)

    def test_22_midpoint(self):
        c = build_chain(4, RuleDistribution.single(2, 2))
        assert c.up_rate[2] == pytest.approx(0.5)
        assert c.down_rate[2] == pytest.approx(0.5)

    def test_rate_formula(self):
        N, rule = 37, PollingRule(5, 3)
        c = build_chain(N, RuleDistribution.single(5, 3))
        for n in range(1, N):
            assert c.up_rate[n] == pytest.approx((N - n) * binomial_tail_enum(5, n / N, 3), rel=1e-12)
            # down move: at least d of the polled nodes hold 0
            assert c.down_rate[n] == pytest.approx(n * binomial_tail_enum(5, (N - n) / N, 3), rel=1e-12)

    @pytest.mark.parametrize(
        "rules",
        [
            RuleDistribution.single(1, 1),
            RuleDistribution.single(3, 2),
            RuleDistribution.single(4, 2),
            RuleDistribution.mixture(0.4),
            RuleDistribution.of([((3, 2), 0.2), ((5, 3), 0.3), ((2, 2), 0.5)]),
        ],
    )
    @pytest.mark.parametrize("mode,excl", [(SamplingMode.WITH_REPLACEMENT, False), (WITHOUT, False), (WITHOUT, True)])
    def test_boundaries_and_exact_symmetry(self, rules, mode, excl):
        N = 41
        c = build_chain(N, rules, mode, excl)
        assert c.up_rate[0] == c.down_rate[0] == c.up_rate[N] == c.down_rate[N] == 0.0
        assert np.array_equal(c.up_rate, c.down_rate[::-1])

    def test_interior_rates_positive_with_replacement(self):
        c = build_chain(50, RuleDistribution.single(3, 2))
        assert np.all(c.up_rate[1:-1] > 0) and np.all(c.down_rate[1:-1] > 0)

    def test_mixture_is_weighted_average(self):
        N = 30
        mix = build_chain(N, RuleDistribution.mixture(0.3))
        a = build_chain(N, RuleDistribution.single(1, 1))
        b = build_chain(N, RuleDistribution.single(2, 2))
        assert np.allclose(mix.up_rate, 0.3 * a.up_rate + 0.7 * b.up_rate, rtol=1e-14)

    def test_degenerate_distribution_equals_rule(self):
        a = build_chain(25, RuleDistribution.single(3, 2))
        b = build_chain(25, PollingRule(3, 2))
        assert np.array_equal(a.up_rate, b.up_rate)

    def test_without_replacement_includes_self_by_default(self):
        N, n = 12, 5
        c = build_chain(N, RuleDistribution.single(3, 2), WITHOUT)
        assert c.up_rate[n] == pytest.approx((N - n) * float(hypergeom_tail_enum(N, n, 3, 2)), rel=1e-12)
        c2 = build_chain(N, RuleDistribution.single(3, 2), WITHOUT, exclude_self=True)
        assert c2.up_rate[n] == pytest.approx((N - n) * float(hypergeom_tail_enum(N - 1, n, 3, 2)), rel=1e-12)
        # a 1-node sees N-n zeros among the other N-1
        assert c2.down_rate[n] == pytest.approx(n * float(hypergeom_tail_enum(N - 1, N - n, 3, 2)), rel=1e-12)

    def test_without_replacement_needs_room(self):
        with pytest.raises(ValueError):
            build_chain(3, RuleDistribution.single(3, 2), WITHOUT)

    def test_population_too_small(self):
        with pytest.raises(ValueError):
            build_chain(1, RuleDistribution.single(1, 1))

    @settings(max_examples=30, deadline=None)
    @given(N=st.integers(2, 300), m=st.integers(1, 9), data=st.data())
    def test_symmetry_property(self, N, m, data):
        d = data.draw(st.integers(1, m))
        c = build_chain(N, RuleDistribution.single(m, d))
        assert np.array_equal(c.up_rate, c.down_rate[::-1])
        assert np.all(c.up_rate >= 0)
