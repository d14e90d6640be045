import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frep.fractional import (
    GridFunction,
    caputo_derivative,
    count_probabilities,
    fixed_point_residual,
    hitting_from_return,
    kf_residual,
    kf_residual_from_times,
    rl_integral,
    simulate_fpp_times,
)
from frep.laws import LawSpec, ml_cdf

G = np.linspace(0.0, 2.0, 2001)


class TestGridFunction:
    def test_validation(self):
        with pytest.raises(ValueError):
            GridFunction(np.array([0.1, 0.2]), np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            GridFunction(np.array([0.0, 0.0, 1.0]), np.zeros(3))

    def test_is_cdf(self):
        assert GridFunction(G, 1 - np.exp(-G)).is_cdf()
        assert not GridFunction(G, np.sin(5 * G)).is_cdf()


class TestRL:
    @pytest.mark.parametrize("beta", [0.3, 0.5, 1.0, 1.7])
    def test_constant(self, beta):
        out = rl_integral(GridFunction(G, np.ones_like(G)), beta)
        assert np.allclose(out.values, G**beta / math.gamma(1 + beta), atol=1e-13)

    def test_beta_one_trapezoid(self):
        g = np.array([0.0, 0.5, 1.2, 2.0])
        v = np.array([1.0, 3.0, -1.0, 0.5])
        out = rl_integral(GridFunction(g, v), 1.0)
        trap = np.concatenate([[0.0], np.cumsum(np.diff(g) * (v[1:] + v[:-1]) / 2)])
        assert np.allclose(out.values, trap, atol=1e-14)

    def test_semigroup(self):
        f = GridFunction(G, np.sin(G) + G**2)
        two = rl_integral(rl_integral(f, 0.4), 0.3)
        one = rl_integral(f, 0.7)
        assert np.max(np.abs(two.values - one.values)) < 1e-6

    @given(st.floats(0.1, 2.0), st.floats(1.0, 3.0))
    @settings(max_examples=30, deadline=None)
    def test_power_function(self, beta, k):
        # I^beta t^k = Gamma(k+1)/Gamma(k+1+beta) t^(k+beta)
        g = np.linspace(0, 1, 4001)
        out = rl_integral(GridFunction(g, g**k), beta)
        exact = math.gamma(k + 1) / math.gamma(k + 1 + beta) * g ** (k + beta)
        assert np.max(np.abs(out.values - exact)) < 1e-5

    def test_rejects_beta(self):
        with pytest.raises(ValueError):
            rl_integral(GridFunction(G, G), 0.0)


class TestCaputo:
    @pytest.mark.parametrize("a", [0.25, 0.5, 0.75])
    def test_linear(self, a):
        out = caputo_derivative(GridFunction(G, G), a)
        assert np.allclose(out.values, G ** (1 - a) / math.gamma(2 - a), atol=1e-12)

    def test_constant(self):
        assert np.all(caputo_derivative(GridFunction(G, np.full_like(G, 3.0)), 0.5).values == 0)

    @pytest.mark.parametrize("a", [0.3, 0.6])
    def test_left_inverse(self, a):
        g = G * np.exp(-G)
        back = caputo_derivative(rl_integral(GridFunction(G, g), a), a)
        assert np.max(np.abs(back.values[20:] - g[20:])) < 2e-3


class TestHittingFromReturn:
    @pytest.mark.parametrize("a", [0.3, 0.5, 0.8])
    def test_no_return(self, a):
        g = np.linspace(0, 1, 1001)
        F = hitting_from_return(None, GridFunction(g, np.zeros_like(g)), a)
        assert np.allclose(F.values, g**a, atol=1e-12)

    def test_exponential_fixed(self):
        F = hitting_from_return(None, GridFunction(G, 1 - np.exp(-G)), 1.0)
        assert np.max(np.abs(F.values - (1 - np.exp(-G)))) < 1e-6

    @pytest.mark.parametrize("a", [0.5, 0.75])
    def test_ml_fixed(self, a):
        g = np.arange(0, 5.0 + 1e-9, 1e-3)
        Ft = ml_cdf(a, math.gamma(1 + a), g)
        F = hitting_from_return(None, GridFunction(g, Ft), a)
        assert np.max(np.abs(F.values - Ft)) < 2e-3

    def test_rejects_non_cdf(self):
        with pytest.raises(ValueError):
            hitting_from_return(None, GridFunction(G, 2 * G), 0.5)


class TestFixedPoint:
    GRID = np.arange(0, 5.0 + 1e-9, 1e-3)

    @pytest.mark.parametrize("a", [0.5, 0.75])
    def test_fpp_is_fixed(self, a):
        assert fixed_point_residual(a, 1.0, 1, self.GRID) < 2e-3

    def test_impostor(self):
        assert fixed_point_residual(0.5, 1.0, 1, self.GRID, law=LawSpec("Exp", 1.0, 1.0), method="analytic") > 0.05

    def test_compound(self):
        g = np.arange(0, 3.0 + 1e-9, 5e-3)
        r = fixed_point_residual(0.5, 0.5, 1, g, method="mc", trials=10**6, rng=np.random.default_rng(1))
        assert r < 1e-2

    def test_two_events(self):
        g = np.arange(0, 3.0 + 1e-9, 5e-3)
        r = fixed_point_residual(0.5, 0.5, 2, g, trials=10**6, rng=np.random.default_rng(2))
        assert r < 1e-2

    def test_bad_d(self):
        with pytest.raises(ValueError):
            fixed_point_residual(0.5, 1.0, 3, self.GRID)


class TestKolmogorovFeller:
    T = np.arange(0, 3.0 + 1e-9, 0.01)

    def test_poisson(self):
        times = simulate_fpp_times(1.0, 1.0, 10**5, 6, np.random.default_rng(3))
        res, se = kf_residual_from_times(times, self.T, 1.0, 1.0, 3)
        # birth equations hold exactly; only MC noise and the trapezoid rule remain
        assert res < 3 * se + 1e-4

    def test_counts_interface(self):
        # counts and event times give the same residual
        times = simulate_fpp_times(0.5, 1.0, 5000, 8, np.random.default_rng(4))
        counts = (times[:, :, None] <= self.T[None, None, :]).sum(axis=1)
        from_counts = kf_residual(counts, self.T, 0.5, 1.0, 3)
        assert from_counts == pytest.approx(kf_residual_from_times(times, self.T, 0.5, 1.0, 3)[0], abs=1e-12)

    def test_mismatched_lambda(self):
        lam = math.gamma(1.5)
        times = simulate_fpp_times(0.5, lam, 10**5, 6, np.random.default_rng(5))
        res, _ = kf_residual_from_times(times, self.T, 0.5, 2 * lam, 3)
        assert res > 0.05

    def test_probabilities_sum(self):
        times = simulate_fpp_times(0.5, 1.0, 5000, 30, np.random.default_rng(6))
        P = count_probabilities(times, self.T, 3)
        assert np.all(P >= 0) and np.all(P.sum(axis=0) <= 1 + 1e-12)
