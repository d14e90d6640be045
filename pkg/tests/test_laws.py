import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from frep.laws import (
    LawSpec,
    EventSample,
    d_alpha,
    distribution_distance,
    empirical_laplace,
    empirical_laplace_joint,
    windowed_laplace_joint,
    fpp_subordinator_crosscheck,
    ks_statistic,
    laplace_J,
    merge_zero_gaps,
    ml_cdf,
    ml_function,
    reference_laplace,
    renewal_counts,
    sample_positive_stable,
    sample_renewal_process,
    sample_waiting,
    thin_rescale,
    two_sample_ks,
)


def rng(k=0):
    return np.random.default_rng(12345 + k)


class TestStable:
    def test_laplace_at_one(self):
        s = sample_positive_stable(0.5, rng(), 10**6)
        assert abs(np.exp(-s).mean() - math.exp(-1)) < 0.002

    def test_alpha_one_is_constant(self):
        assert np.all(sample_positive_stable(1.0, rng(), 100) == 1.0)

    def test_levy_identity(self):
        s = sample_positive_stable(0.5, rng(1), 10**6)
        # with E exp(-sS) = exp(-sqrt(s)), S = 1/(2 G^2): P(S <= x) = erfc(1/(2 sqrt x))
        ks = stats.kstest(s, lambda x: special.erfc(0.5 / np.sqrt(np.maximum(x, 1e-300)))).statistic
        assert ks < 0.005

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            sample_positive_stable(1.5, rng())


class TestWaiting:
    def test_exponential_case(self):
        w = sample_waiting(1.0, 2.0, 1.0, rng(), 10**5)
        assert stats.kstest(w, "expon", args=(0, 0.5)).statistic < 0.01

    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
    def test_half_survival(self, t):
        w = sample_waiting(0.5, 1.0, 1.0, rng(2), 10**6)
        exact = math.exp(t) * math.erfc(math.sqrt(t))
        assert abs(np.mean(w > t) - exact) < 0.005

    def test_mixture_atom(self):
        w = sample_waiting(0.5, 1.0, 0.3, rng(3), 10**5)
        frac = np.mean(w == 0)
        assert abs(frac - 0.7) < 4 * math.sqrt(0.21 / 1e5)


class TestMittagLeffler:
    def test_zero(self):
        assert ml_function(0.5, 0.0) == 1.0

    @pytest.mark.parametrize("z", [-0.1, -1.0, -4.0, -20.0])
    def test_exponential(self, z):
        assert ml_function(1.0, z) == pytest.approx(math.exp(z), rel=1e-10)

    def test_half_at_minus_one(self):
        assert ml_function(0.5, -1.0) == pytest.approx(math.e * math.erfc(1.0), abs=1e-7)
        assert ml_function(0.5, -1.0) == pytest.approx(0.4275836, abs=1e-7)

    @pytest.mark.parametrize("x", [0.3, 3.0, 6.0, 40.0, 1e3])
    def test_half_erfc_branches(self, x):
        # both the series and the integral branch against e^{x^2} erfc(x)
        assert ml_function(0.5, -x) == pytest.approx(special.erfcx(x), rel=1e-7)

    @given(st.floats(0.3, 1.0), st.floats(0.0, 50.0))
    @settings(max_examples=60, deadline=None)
    def test_in_unit_interval(self, a, x):
        v = ml_function(a, -x)
        assert 0.0 < v <= 1.0

    @given(st.floats(0.3, 0.95), st.floats(0.01, 30.0), st.floats(0.01, 5.0))
    @settings(max_examples=40, deadline=None)
    def test_monotone(self, a, x, dx):
        assert ml_function(a, -(x + dx)) <= ml_function(a, -x) + 1e-12


class TestLawSpec:
    def test_rejects_tag(self):
        with pytest.raises(ValueError):
            LawSpec("nope")

    def test_j_family_needs_alpha_below_one(self):
        with pytest.raises(ValueError):
            LawSpec("J", 1.0)

    def test_w_mix_atom(self):
        spec = LawSpec("W_mix", 0.5, 1.0, theta=0.5)
        assert float(spec.cdf(0.0)) == pytest.approx(0.5)
        assert spec.atom_at_zero() == 0.5


class TestRenewal:
    def test_poisson_mean(self):
        counts = renewal_counts(LawSpec("PPP", 1.0, 1.0), 10.0, 10**5, rng())
        assert abs(counts.mean() - 10.0) < 4 * math.sqrt(10.0 / 1e5)

    def test_first_event_is_ml(self):
        spec = LawSpec("FPP", 0.5, 1.0)
        r = rng(4)
        first = np.array([s.times[0] if s.times.size else np.inf for s in (sample_renewal_process(spec, 50.0, r) for _ in range(4000))])
        assert ks_statistic(first, spec.cdf, horizon=50.0) < 0.03

    def test_cfpp_constructions_agree(self):
        spec = LawSpec("CFPP", 0.5, math.gamma(1.5), theta=0.5)
        a = renewal_counts(spec, 1.0, 10**5, rng(5), "marks")
        b = renewal_counts(spec, 1.0, 10**5, rng(6), "mixture")
        assert two_sample_ks(a, b) < 0.01

    def test_merge_zero_gaps(self):
        t, m = merge_zero_gaps(np.array([0.5, 0.5, 1.0]))
        assert t.tolist() == [0.5, 1.0] and m.tolist() == [2, 1]

    def test_event_sample_validation(self):
        with pytest.raises(ValueError):
            EventSample(np.array([1.0, 0.5]), np.array([1, 1]), 2.0)


class TestThinning:
    def test_identity(self):
        s = sample_renewal_process(LawSpec("PPP"), 5.0, rng())
        t = thin_rescale(s, 1.0, 1.0, rng(1))
        assert np.array_equal(s.times, t.times) and t.horizon == s.horizon

    def test_kept_fraction(self):
        r = rng(7)
        kept = total = 0
        for _ in range(300):
            s = sample_renewal_process(LawSpec("PPP"), 20.0, r)
            kept += thin_rescale(s, 0.3, 1.0, r).times.size
            total += s.times.size
        assert abs(kept / total - 0.3) < 0.02

    def test_poisson_stability(self):
        r = rng(8)
        tau = 0.4
        thinned = []
        for _ in range(20000):
            s = sample_renewal_process(LawSpec("PPP", 1.0, 1.0), 5.0 / tau, r)
            thinned.append(thin_rescale(s, tau, tau, r).count(5.0))
        direct = renewal_counts(LawSpec("PPP", 1.0, 1.0), 5.0, 20000, rng(9))
        assert two_sample_ks(np.array(thinned), direct) < 0.02


class TestSubordinator:
    def test_crosscheck(self):
        rep = fpp_subordinator_crosscheck(math.gamma(1.5), 1.0, 10**4, rng())
        assert rep["ks"] < 0.02

    def test_zero_horizon_counts(self):
        rep = fpp_subordinator_crosscheck(math.gamma(1.5), 0.0, 100, rng(1))
        assert rep["mean_subordinator"] == 0.0 and rep["mean_renewal"] == 0.0


class TestLaplace:
    def test_normalization(self):
        for spec in (LawSpec("Exp"), LawSpec("ML_H", 0.5), LawSpec("J", 0.5), LawSpec("J_tilde", 0.5)):
            assert reference_laplace(spec, 0.0) == 1.0

    def test_d_half(self):
        assert d_alpha(0.5) == pytest.approx((2 / math.pi) ** 2, rel=1e-12)
        assert d_alpha(0.5) == pytest.approx(0.4052847, abs=1e-7)

    @pytest.mark.parametrize("a", [0.3, 0.5, 0.75])
    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_j_against_incomplete_gamma(self, a, s):
        # int_0^1 y^-a e^{-sy} dy = s^(a-1) * lower incomplete gamma(1-a, s), evaluated in mpmath
        mp.mp.dps = 40
        inner = mp.power(s, a - 1) * mp.gammainc(1 - a, 0, s)
        oracle = 1 / (mp.exp(-s) + s * inner)
        assert laplace_J(a, s) == pytest.approx(float(oracle), abs=1e-8)

    @given(st.floats(0.2, 0.9), st.floats(0.01, 20.0))
    @settings(max_examples=40, deadline=None)
    def test_j_family_in_unit_interval(self, a, s):
        for tag in ("J", "J_frak", "J_tilde"):
            v = reference_laplace(LawSpec(tag, a), s)
            assert 0.0 <= v <= 1.0

    def test_ml_laplace(self):
        est = empirical_laplace(sample_waiting(0.5, 1.0, 1.0, rng(), 10**6), 1.0)
        assert abs(est.value - 0.5) < 0.003
        assert reference_laplace(LawSpec("ML_H", 0.5, 1.0), 1.0) == pytest.approx(0.5)

    def test_constant_samples(self):
        assert empirical_laplace([1, 1, 1], 1.0).value == pytest.approx(math.exp(-1))

    def test_joint_independent(self):
        r = rng(3)
        x, y = r.exponential(size=10**5), r.exponential(size=10**5)
        j, p, se = empirical_laplace_joint(x, y, 1.0, 1.0)
        assert abs(j - p) < 3 * se

    def test_windowed_joint_removes_window_bias(self):
        r = rng(4)
        x, y = sample_waiting(0.5, 1.0, 1.0, r, 10**5), sample_waiting(0.5, 1.0, 1.0, r, 10**5)
        H = 5.0
        y_seen = np.where(x + y <= H, y, np.inf)
        naive_j, naive_p, naive_se = empirical_laplace_joint(np.where(x <= H, x, np.inf), y_seen, 1.0, 1.0)
        j, p, se = windowed_laplace_joint(np.where(x <= H, x, np.inf), y_seen, H)
        assert abs(naive_j - naive_p) > 5 * naive_se
        assert abs(j - p) < 3 * se


class TestDistance:
    def test_calibration(self):
        spec = LawSpec("ML_H", 0.5, 1.0)
        x = sample_waiting(0.5, 1.0, 1.0, rng(), 10**4)
        assert distribution_distance(x, spec).ks < 1.63 / math.sqrt(1e4)

    def test_power(self):
        x = rng().exponential(size=10**4)
        assert distribution_distance(x, LawSpec("ML_H", 0.5, 1.0)).ks > 0.1

    def test_w_mix_atom(self):
        x = sample_waiting(0.5, 1.0, 0.5, rng(1), 10**5)
        assert abs(np.mean(x <= 0.0) - 0.5) < 0.01
        assert distribution_distance(x, LawSpec("W_mix", 0.5, 1.0, theta=0.5)).ks < 0.01

    def test_cdf_values(self):
        assert float(ml_cdf(0.5, 1.0, 1.0)) == pytest.approx(1 - math.e * math.erfc(1), abs=1e-7)
