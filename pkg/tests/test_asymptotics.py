import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pollvote.asymptotics import (
    binary_entropy,
    exponent_integral,
    g,
    g_grid,
    kl_bernoulli,
    log_theorem1_bound,
    mixture_exponent,
    mixture_g,
    mixture_rate_I,
    theorem1_bound,
)
from pollvote.chain import RuleDistribution, build_chain
from pollvote.solver import hitting_probabilities

D13 = math.log(2) - (math.log(3) - (2 / 3) * math.log(2))  # D(1/3; 1/2) by hand


def rule(m, d):
    return RuleDistribution.single(m, d)


def random_rules():
    pair = st.integers(1, 9).flatmap(lambda m: st.tuples(st.just(m), st.integers(1, m)))
    return st.lists(pair, min_size=1, max_size=4, unique=True).flatmap(
        lambda pairs: st.lists(st.floats(0.05, 1.0), min_size=len(pairs), max_size=len(pairs)).map(
            lambda ws: RuleDistribution.of([(p, w / sum(ws)) for p, w in zip(pairs, ws)])
        )
    )


class TestDrift:
    def test_22_closed_form(self):
        assert g(0.25, rule(2, 2)) == pytest.approx(3.0, rel=1e-14)
        for x in (0.1, 0.3, 0.7):
            assert g(x, rule(2, 2)) == pytest.approx((1 - x) / x, rel=1e-13)

    @pytest.mark.parametrize("m,d", [(1, 1), (2, 2), (3, 2), (5, 3), (7, 7)])
    def test_half_is_neutral(self, m, d):
        assert g(0.5, rule(m, d)) == pytest.approx(1.0, rel=1e-14)

    def test_voter_is_flat(self):
        assert np.allclose(g_grid(rule(1, 1), np.linspace(0.05, 0.95, 19)), 1.0, rtol=1e-14)

    @pytest.mark.parametrize("p", [0.0, 0.1, 0.5, 0.9, 1.0])
    def test_mixture_closed_form(self, p):
        dist = RuleDistribution.mixture(p)
        for x in np.linspace(0.05, 0.95, 10):
            assert g(x, dist) == pytest.approx(mixture_g(x, p), rel=1e-13)

    def test_boundaries(self):
        assert g(0.0, rule(2, 2)) == math.inf
        assert g(1.0, rule(2, 2)) == 0.0
        assert g(0.0, rule(3, 1)) == pytest.approx(1 / 3)
        assert g(0.0, RuleDistribution.mixture(0.5)) == pytest.approx(2.0)
        with pytest.raises(ValueError):
            g(1.1, rule(2, 2))

    @settings(max_examples=60, deadline=None)
    @given(rules=random_rules(), x=st.floats(0.01, 0.99))
    def test_reflection(self, rules, x):
        assert g(x, rules) * g(1 - x, rules) == pytest.approx(1.0, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(m=st.integers(2, 12), data=st.data())
    def test_decreasing_for_majority_rule(self, m, data):
        d = data.draw(st.integers(m // 2 + 1, m))
        vals = g_grid(rule(m, d), np.linspace(0.02, 0.98, 97))
        assert np.all(np.diff(vals) < 0)

    @settings(max_examples=40, deadline=None)
    @given(rules=random_rules(), x=st.floats(0.01, 0.49))
    def test_mixture_drift_above_one_below_half(self, rules, x):
        # what the exponent needs: log g > 0 on (0, 1/2), rule by rule and hence for the mixture
        if rules.strict_majority_as and rules.max_m > 1:
            assert g(x, rules) > 1.0

    def test_mixture_need_not_be_monotone(self):
        # near 0 the voter part dominates: g ~ 2 (1 + x/2) for this mixture
        dist = RuleDistribution.of([((1, 1), 0.5), ((4, 3), 0.5)])
        assert g(0.04, dist) > g(0.02, dist) > g(0.0, dist) == pytest.approx(2.0)


class TestExponent:
    def test_22_at_third(self):
        assert exponent_integral(1 / 3, rule(2, 2)) == pytest.approx(D13, abs=1e-9)
        assert D13 == pytest.approx(0.05663, abs=1e-5)

    @pytest.mark.parametrize("m", [2, 3, 5])
    @pytest.mark.parametrize("alpha", [0.1, 0.2, 1 / 3, 0.45])
    def test_mm_matches_kl(self, m, alpha):
        assert exponent_integral(alpha, rule(m, m)) == pytest.approx((m - 1) * kl_bernoulli(alpha), abs=1e-7)

    def test_half_is_zero(self):
        assert exponent_integral(0.5, rule(3, 2)) == 0.0

    def test_rejects_non_majority(self):
        with pytest.raises(ValueError):
            exponent_integral(0.3, rule(4, 2))
        with pytest.raises(ValueError):
            exponent_integral(0.3, RuleDistribution.of([((2, 2), 0.5), ((2, 1), 0.5)]))

    def test_domain(self):
        with pytest.raises(ValueError):
            exponent_integral(0.0, rule(2, 2))
        with pytest.raises(ValueError):
            exponent_integral(0.6, rule(2, 2))

    def test_nonincreasing_in_alpha(self):
        vals = [exponent_integral(a, rule(3, 2)) for a in np.linspace(0.05, 0.5, 12)]
        assert np.all(np.diff(vals) <= 1e-12)
        assert vals[-1] == 0.0

    @pytest.mark.parametrize("m,d", [(2, 2), (3, 2)])
    def test_exact_decay_respects_bound(self, m, d):
        alpha = 1 / 3
        bound = exponent_integral(alpha, rule(m, d))
        rates = []
        for N in (500, 1000, 2000, 4000):
            res = hitting_probabilities(build_chain(N, rule(m, d)))
            rates.append(res.log_h[N // 3] / N)
        assert rates[-1] <= -bound + 0.01
        # finite-size corrections shrink monotonically
        assert np.all(np.diff(np.abs(np.array(rates) + bound)) < 0)


class TestKL:
    def test_values(self):
        assert kl_bernoulli(0.5) == 0.0
        assert kl_bernoulli(0.0) == pytest.approx(math.log(2))
        assert kl_bernoulli(1.0) == pytest.approx(math.log(2))
        assert kl_bernoulli(1 / 3) == pytest.approx(D13, rel=1e-14)
        assert binary_entropy(0.5) == pytest.approx(math.log(2))
        with pytest.raises(ValueError):
            kl_bernoulli(1.5)

    @given(p=st.floats(0, 1))
    def test_nonnegative_symmetric(self, p):
        assert kl_bernoulli(p) >= -1e-15
        assert kl_bernoulli(p) == pytest.approx(kl_bernoulli(1 - p), abs=1e-14)


class TestKLBound:
    def test_single_node(self):
        assert theorem1_bound(1, 3, 0.2, c=2.5) == pytest.approx(2.5)

    def test_log_form(self):
        for N in (10, 100, 1000):
            assert log_theorem1_bound(N, 2, 1 / 3) == pytest.approx(-(N - 1) * D13, rel=1e-13)

    def test_domain(self):
        with pytest.raises(ValueError):
            theorem1_bound(10, 1, 0.2)
        with pytest.raises(ValueError):
            theorem1_bound(10, 2, 0.5)

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_bound_dominates_exact_from_n0(self, m):
        # empirical N0: smallest N in the grid from which c=1 dominates the exact h_N(1/3)
        ok = []
        Ns = list(range(10, 1001, 30))
        for N in Ns:
            res = hitting_probabilities(build_chain(N, rule(m, m)))
            i = N // 3
            ok.append(res.log_h[i] <= log_theorem1_bound(N, m, i / N))
        first = ok.index(True)
        assert all(ok[first:])
        assert Ns[first] == 10


class TestMixture:
    def test_trivial(self):
        assert mixture_exponent(0.5, 0.3) == 0.0

    def test_p0_is_22(self):
        assert mixture_exponent(1 / 3, 0.0) == pytest.approx(D13, abs=1e-12)
        for x in (0.1, 0.25, 0.4):
            assert mixture_exponent(x, 0.0) == pytest.approx(kl_bernoulli(x), abs=1e-12)

    def test_p1_is_zero(self):
        assert mixture_exponent(0.2, 1.0) == 0.0
        with pytest.raises(ValueError):
            mixture_rate_I(0.2, 1.0)

    @pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.7, 0.9])
    def test_closed_form_matches_quadrature(self, p):
        for x in (0.1, 0.2, 0.3, 0.45):
            assert mixture_exponent(x, p) == pytest.approx(
                exponent_integral(x, RuleDistribution.mixture(p)), abs=1e-7
            )

    def test_ordered_in_p(self):
        xs = np.linspace(0.02, 0.48, 24)
        curves = np.array([[mixture_exponent(x, p) for x in xs] for p in (0, 0.25, 0.5, 0.75)])
        assert np.all(np.diff(curves, axis=0) < 0)
