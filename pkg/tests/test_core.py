import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from asympca.core import (
    ExpectileResult,
    TauLevel,
    asym_l1_norm,
    asym_l2_norm_sq,
    asymptotic_variance,
    expectile_1d,
    expectile_foc_residual,
    quantile_1d,
    t_function,
    tau_deviation,
    tau_variance,
)
from asympca.exceptions import ContractError, DegenerateInputError, DomainError

floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
taus = st.floats(min_value=0.02, max_value=0.98)
samples = st.lists(floats, min_size=1, max_size=40)


def expectile_objective(values, tau, e):
    d = np.asarray(values) - e
    return float(np.sum(np.where(d > 0, tau, 1 - tau) * d * d))


def expectile_oracle(values, tau):
    """Independent scalar minimization of the asymmetric squared loss."""
    lo, hi = min(values), max(values)
    if lo == hi:
        return lo
    res = minimize_scalar(lambda e: expectile_objective(values, tau, e),
                          bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return res.x


def quantile_oracle(values, tau):
    """Brute-force minimization of the asymmetric L1 loss over data points."""
    ys = np.sort(np.asarray(values, dtype=float))

    def obj(q):
        d = ys - q
        return np.sum(np.abs(d) * np.where(d >= 0, tau, 1 - tau))

    vals = np.array([obj(q) for q in ys])
    best = vals.min()
    return ys[np.nonzero(vals <= best + 1e-12 * (1 + abs(best)))[0][0]]


class TestTauLevel:
    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.3, float("nan")])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(DomainError):
            TauLevel(bad)

    def test_accepts_interior(self):
        assert float(TauLevel(0.31)) == 0.31

    def test_ops_accept_taulevel(self):
        assert expectile_1d([0.0, 1.0], TauLevel(0.8)).value == 0.8


class TestNorms:
    def test_l1_examples(self):
        assert asym_l1_norm([0, 0], 0.7) == 0.0
        assert asym_l1_norm([1, -1], 0.7) == pytest.approx(1.0, abs=1e-15)
        assert asym_l1_norm([2, -3], 0.9) == pytest.approx(2.1, abs=1e-15)

    def test_l2_examples(self):
        assert asym_l2_norm_sq([1, -2], 0.9) == pytest.approx(1.3, abs=1e-15)
        assert asym_l2_norm_sq([3, 4], 0.5) == pytest.approx(12.5, abs=1e-15)
        assert asym_l2_norm_sq([-1], 0.05) == pytest.approx(0.95, abs=1e-15)

    @given(y=st.lists(floats, min_size=1, max_size=20), tau=taus)
    @settings(deadline=None)
    def test_l1_zero_iff_zero(self, y, tau):
        value = asym_l1_norm(y, tau)
        assert value >= 0.0
        assert (value == 0.0) == all(v == 0.0 for v in y)

    @given(y=st.lists(floats, min_size=1, max_size=20))
    @settings(deadline=None)
    def test_l2_half_is_half_square(self, y):
        arr = np.asarray(y)
        assert asym_l2_norm_sq(arr, 0.5) == pytest.approx(
            0.5 * float(arr @ arr), rel=1e-12, abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            asym_l1_norm([1.0, float("inf")], 0.5)
        with pytest.raises(DomainError):
            asym_l2_norm_sq([float("nan")], 0.5)


class TestExpectile:
    def test_constant_sample(self):
        res = expectile_1d([2.5, 2.5, 2.5], 0.73)
        assert res.value == pytest.approx(2.5, abs=1e-14)
        assert res.converged

    def test_half_is_mean(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.normal(size=rng.integers(1, 200)) * 3 + 1
            assert expectile_1d(x, 0.5).value == pytest.approx(
                float(np.mean(x)), abs=1e-12)

    def test_two_point_example(self):
        # first-order condition tau*(1-e) = (1-tau)*e gives e = tau
        res = expectile_1d([0.0, 1.0], 0.8)
        assert res.value == 0.8
        assert res.converged
        oracle = expectile_oracle([0.0, 1.0], 0.8)
        assert res.value == pytest.approx(oracle, abs=1e-9)

    def test_against_scalar_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            x = rng.standard_t(4, size=rng.integers(3, 60))
            tau = rng.uniform(0.05, 0.95)
            got = expectile_1d(x, tau).value
            assert got == pytest.approx(expectile_oracle(x, tau), abs=1e-7)

    def test_first_order_condition(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            x = rng.normal(size=rng.integers(1, 300)) * 5
            tau = rng.uniform(0.02, 0.98)
            res = expectile_1d(x, tau)
            assert res.converged
            tol = 1e-10 * (1 + np.sum(np.abs(x)))
            assert abs(expectile_foc_residual(x, tau, res.value)) <= tol

    def test_single_sample(self):
        assert expectile_1d([5.0], 0.9).value == 5.0

    @given(x=samples, tau=taus, t=floats)
    @settings(deadline=None, max_examples=60)
    def test_translation_equivariance(self, x, tau, t):
        base = expectile_1d(x, tau).value
        shifted = expectile_1d(np.asarray(x) + t, tau).value
        assert abs(shifted - (base + t)) <= 1e-10 * (1 + abs(t) + abs(base))

    @given(x=samples, tau=taus, s=st.floats(min_value=1e-3, max_value=1e3))
    @settings(deadline=None, max_examples=60)
    def test_scale_equivariance(self, x, tau, s):
        base = expectile_1d(x, tau).value
        scaled = expectile_1d(np.asarray(x) * s, tau).value
        assert scaled == pytest.approx(s * base, rel=1e-10, abs=1e-9)

    @given(x=samples, tau=taus)
    @settings(deadline=None, max_examples=60)
    def test_negation_flips_level(self, x, tau):
        lhs = expectile_1d(-np.asarray(x), tau).value
        rhs = -expectile_1d(x, 1 - tau).value
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-9)

    def test_iteration_bound_sampled(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(10 ** rng.uniform(0.5, 5))
            x = rng.normal(size=n)
            tau = rng.uniform(0.02, 0.98)
            res = expectile_1d(x, tau)
            assert res.converged
            assert res.iterations <= 4 * math.ceil(math.log2(max(n, 2))) + 8

    def test_scalar_iteration_monotone_objective(self):
        # mirror of the weight-set fixed point, tracking the objective
        rng = np.random.default_rng(5)
        for _ in range(25):
            x = rng.standard_t(3, size=rng.integers(2, 500))
            tau = rng.uniform(0.05, 0.95)
            e = float(np.mean(x))
            objs = [expectile_objective(x, tau, e)]
            for _ in range(200):
                pos = x > e
                num = tau * x[pos].sum() + (1 - tau) * x[~pos].sum()
                den = tau * pos.sum() + (1 - tau) * (~pos).sum()
                e_new = num / den
                objs.append(expectile_objective(x, tau, e_new))
                if np.array_equal(x > e_new, pos):
                    e = e_new
                    break
                e = e_new
            objs = np.array(objs)
            assert np.all(np.diff(objs) <= 1e-12 * np.abs(objs[:-1]) + 1e-300)
            assert e == pytest.approx(expectile_1d(x, tau).value, rel=1e-12)

    def test_rejects_empty_and_nan(self):
        with pytest.raises(ContractError):
            expectile_1d([], 0.5)
        with pytest.raises(DomainError):
            expectile_1d([1.0, float("nan")], 0.5)


class TestQuantile:
    def test_examples(self):
        assert quantile_1d([1, 2, 3], 0.5) == 2.0
        assert quantile_1d([5], 0.3) == 5.0
        assert quantile_1d([1, 2, 3, 4], 0.25) == 1.0

    def test_against_brute_force(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            x = np.round(rng.normal(size=rng.integers(1, 40)), 2)
            tau = rng.uniform(0.02, 0.98)
            assert quantile_1d(x, tau) == quantile_oracle(x, tau)

    def test_lower_endpoint_on_flat_interval(self):
        # tau*n integral: the minimizing set is [1, 2]; lower endpoint wins
        assert quantile_1d([1.0, 2.0, 3.0, 4.0], 0.25) == 1.0
        assert quantile_1d([1.0, 2.0, 3.0, 4.0, 5.0], 0.2) == 1.0


class TestTauVariance:
    def test_examples(self):
        assert tau_variance([3, 3, 3, 3], 0.4) == pytest.approx(0.0, abs=1e-25)
        assert tau_variance([-1, 1], 0.5) == pytest.approx(0.5, abs=1e-14)
        assert tau_variance([0, 1], 0.8) == pytest.approx(0.08, abs=1e-14)

    def test_direct_evaluation_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            x = rng.normal(size=rng.integers(2, 80))
            tau = rng.uniform(0.05, 0.95)
            e = expectile_1d(x, tau).value
            d = x - e
            expected = float(np.mean(np.where(d > 0, tau, 1 - tau) * d * d))
            assert tau_variance(x, tau) == pytest.approx(expected, rel=1e-12)

    @given(x=st.lists(floats, min_size=2, max_size=30), tau=taus)
    @settings(deadline=None, max_examples=60)
    def test_reflection(self, x, tau):
        lhs = tau_variance(-np.asarray(x), tau)
        rhs = tau_variance(x, 1 - tau)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-10)

    @given(x=st.lists(floats, min_size=2, max_size=30), tau=taus,
           c=floats, s=st.floats(min_value=1e-3, max_value=1e3))
    @settings(deadline=None, max_examples=60)
    def test_translation_and_scaling(self, x, tau, c, s):
        arr = np.asarray(x)
        base = tau_variance(arr, tau)
        shifted = tau_variance(arr + c, tau)
        scale_ref = 1 + abs(c) ** 2 + base
        assert abs(shifted - base) <= 1e-9 * scale_ref
        assert tau_variance(s * arr, tau) == pytest.approx(
            s * s * base, rel=1e-9, abs=1e-12)


class TestTauDeviation:
    def test_examples(self):
        assert tau_deviation([4, 4, 4], 0.9) == 0.0
        assert tau_deviation([-1, 1], 0.5) == pytest.approx(0.5, abs=1e-15)
        assert tau_deviation([0, 1, 2], 0.5) == pytest.approx(1 / 3, abs=1e-15)
        assert quantile_oracle([0, 1, 2], 0.5) == 1.0

    @given(x=st.lists(floats, min_size=1, max_size=30), tau=taus,
           c=st.floats(min_value=1e-3, max_value=1e3))
    @settings(deadline=None, max_examples=60)
    def test_positive_homogeneity(self, x, tau, c):
        arr = np.asarray(x)
        assert tau_deviation(c * arr, tau) == pytest.approx(
            c * tau_deviation(arr, tau), rel=1e-9, abs=1e-12)


class TestTFunction:
    def test_expectile_is_fixed_point(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            x = rng.normal(size=rng.integers(3, 400))
            tau = rng.uniform(0.03, 0.97)
            e = expectile_1d(x, tau).value
            assert abs(t_function(e, x) - tau) <= 1e-8

    def test_symmetric_midpoint(self):
        assert t_function(0.0, [-1.0, 1.0]) == pytest.approx(0.5, abs=1e-15)

    def test_below_minimum_is_zero(self):
        assert t_function(-10.0, [-1.0, 1.0]) == pytest.approx(0.0, abs=1e-15)

    def test_constant_sample_degenerate(self):
        with pytest.raises(DegenerateInputError):
            t_function(2.0, [2.0, 2.0, 2.0])


class TestAsymptoticVariance:
    def test_constant_sample(self):
        assert asymptotic_variance([1.0, 1.0, 1.0], 0.8) == 0.0

    def test_half_recovers_variance(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal(200_000)
        assert asymptotic_variance(x, 0.5) == pytest.approx(1.0, rel=0.05)

    def test_monte_carlo_match_reduced(self):
        # reduced version of the acceptance check at tau = 0.9
        rng = np.random.default_rng(30)
        n, reps, tau = 1000, 400, 0.9
        draws = rng.standard_normal((reps, n))
        e_hat = np.array([expectile_1d(row, tau).value for row in draws])
        e_pop = expectile_1d(rng.standard_normal(2_000_000), tau).value
        mc_var = n * np.var(e_hat - e_pop, ddof=1)
        plug = np.mean([asymptotic_variance(row, tau) for row in draws[:100]])
        assert mc_var == pytest.approx(plug, rel=0.25)

    def test_requires_two_samples(self):
        with pytest.raises(ContractError):
            asymptotic_variance([1.0], 0.5)


def test_result_type_is_frozen():
    res = ExpectileResult(1.0, 3, True)
    with pytest.raises(AttributeError):
        res.value = 2.0
