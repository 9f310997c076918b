import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtrack import bounds

D = 0.01

# 50-digit reference values, evaluated once with mpmath and frozen here
UB_025 = 301.39472325286593
LB_025 = 198.60527674713407
T_2_20_K16 = 1025425.0263090496
SLACK_SUM_UNIFORM_K16 = 1040568.9193386329
MU_HAT_HALF = 0.50236492177585313
LEARNED_UB_026 = 261963.60036685409
LEARNED_T_105 = 976050.7726099815
BETA_KNOWN = 8.6601250552171424
BETA_LEARNED = 84.372486718499677
CMY_CUTOFF_K4 = 207.54732896742025
LEARNED_CUTOFF_K4 = 2022.0590517009196


def _rel(a, b):
    return abs(a - b) / abs(b)


class TestFrozenValues:
    def test_upper_and_lower(self):
        assert _rel(bounds.bernstein_upper_bound(0.25, 1000, 4, D), UB_025) < 1e-12
        assert _rel(bounds.bernstein_lower_bound(0.25, 1000, 4, D), LB_025) < 1e-12

    def test_degenerate_mu_has_only_linear_term(self):
        extra = 2 / 3 * math.log(4 / D)
        assert bounds.bernstein_upper_bound(0.0, 1000, 4, D) == pytest.approx(extra, rel=1e-12)
        assert bounds.bernstein_upper_bound(1.0, 1000, 4, D) == pytest.approx(1000 + extra, rel=1e-12)

    def test_static_t(self):
        assert _rel(bounds.static_t(2**20, 16, D), T_2_20_K16) < 1e-12

    def test_static_t_clamps_at_zero(self):
        assert bounds.static_t(10, 16, D) == 0.0

    def test_slack_sum_uniform(self):
        s = bounds.slack_sum_check([1 / 16] * 16, T_2_20_K16, 16, D)
        assert _rel(s, SLACK_SUM_UNIFORM_K16) < 1e-9
        assert T_2_20_K16 < s <= 2**20

    def test_learned_values(self):
        assert _rel(bounds.learned_mu_upper(0.5, 2**19, D), MU_HAT_HALF) < 1e-12
        assert _rel(bounds.learned_ub(0.26, 1e6, 16, D), LEARNED_UB_026) < 1e-12
        assert _rel(bounds.learned_t(2**20, 1.05, 16, D), LEARNED_T_105) < 1e-12

    def test_beta_constants(self):
        assert bounds.BETA_KNOWN == pytest.approx(BETA_KNOWN, rel=1e-12)
        assert bounds.BETA_LEARNED == pytest.approx(BETA_LEARNED, rel=1e-12)

    def test_switch_thresholds(self):
        low, high = bounds.switch_thresholds(4, D, learned=False)
        assert low == 16
        assert high == pytest.approx(CMY_CUTOFF_K4, rel=1e-12)
        _, high_l = bounds.switch_thresholds(4, D, learned=True)
        assert high_l == pytest.approx(LEARNED_CUTOFF_K4, rel=1e-12)


def _mp_ub(mu, t, k, delta):
    with mpmath.workdps(40):
        mu, t = mpmath.mpf(mu), mpmath.mpf(t)
        ln = mpmath.log(mpmath.mpf(k) / delta)
        return float(mu * t + mpmath.sqrt(2 * t * mu * (1 - mu) * ln) + 2 * ln / 3)


mus = st.floats(0.0, 1.0, allow_nan=False)
ts = st.floats(1.0, 1e9, allow_nan=False)
ks = st.integers(1, 512)
deltas = st.floats(1e-6, 0.5, allow_nan=False)


class TestProperties:
    @given(mus, ts, ks, deltas)
    def test_bounds_bracket_mean(self, mu, t, k, delta):
        ub = bounds.bernstein_upper_bound(mu, t, k, delta)
        lb = bounds.bernstein_lower_bound(mu, t, k, delta)
        assert lb <= mu * t <= ub
        assert ub + lb == pytest.approx(2 * mu * t, rel=1e-9, abs=1e-6)

    @given(mus, ts, ks, deltas)
    def test_upper_matches_mpmath(self, mu, t, k, delta):
        assert bounds.bernstein_upper_bound(mu, t, k, delta) == pytest.approx(
            _mp_ub(mu, t, k, delta), rel=1e-9)

    @given(st.integers(2, 128), st.floats(1.0, 1e4), deltas)
    def test_slack_sum_fits_above_cutoff(self, k, factor, delta):
        # above beta*k*ln(k/delta), the uniform static slacks sum to at most N
        n = bounds.BETA_KNOWN * k * math.log(k / delta) * (1 + factor)
        t = bounds.static_t(n, k, delta)
        assert t > 0
        assert bounds.slack_sum_check([1 / k] * k, t, k, delta) <= n * (1 + 1e-12)

    @given(st.floats(0.0, 0.5), ts, ks, deltas)
    def test_learned_ub_dominates_known(self, mu, t, k, delta):
        assert bounds.learned_ub(mu, t, k, delta) >= bounds.bernstein_upper_bound(mu, t, k, delta)

    @given(st.floats(1.0, 1e9), ks, deltas)
    def test_learned_t_reduces_to_static(self, n, k, delta):
        assert bounds.learned_t(n, 1.0, k, delta) == pytest.approx(
            bounds.static_t(n, k, delta), rel=1e-12, abs=1e-9)

    @given(st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.integers(1, 10**7))
    def test_mu_hat_monotone_on_lower_half(self, a, b, w):
        lo, hi = sorted((a, b))
        assert bounds.learned_mu_upper(lo, w, D) <= bounds.learned_mu_upper(hi, w, D) + 1e-15

    @given(st.floats(0.0, 1.0), st.integers(1, 10**7))
    def test_mu_hat_above_mean(self, mu, w):
        assert bounds.learned_mu_upper(mu, w, D) >= mu

    @given(st.floats(1.0, 1e7), st.floats(1.0, 3.0), ks)
    def test_learned_t_nonincreasing_in_sigma(self, n, sigma, k):
        assert bounds.learned_t(n, sigma, k, D) <= bounds.learned_t(n, 1.0, k, D) + 1e-9


class TestConcentration:
    @pytest.mark.slow
    def test_upper_bound_violation_rate(self):
        k, t, delta, trials = 16, 100_000, D, 10_000
        rng = np.random.default_rng(7)
        counts = rng.multinomial(t, [1 / k] * k, size=trials)
        ub = bounds.bernstein_upper_bound(1 / k, t, k, delta)
        lb = bounds.bernstein_lower_bound(1 / k, t, k, delta)
        frac_hi = float(np.mean((counts > ub).any(axis=1)))
        frac_lo = float(np.mean((counts < lb).any(axis=1)))
        allowed = delta + 3 * math.sqrt(delta / trials)
        assert frac_hi <= allowed
        assert frac_lo <= allowed


class TestValidation:
    @pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 2.0, float("nan")])
    def test_bad_delta(self, delta):
        with pytest.raises(ValueError):
            bounds.bernstein_upper_bound(0.1, 10, 4, delta)

    def test_bad_t(self):
        with pytest.raises(ValueError):
            bounds.bernstein_upper_bound(0.1, 0, 4, D)

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            bounds.learned_t(1000, 0.9, 4, D)

    def test_prob_vector(self):
        assert bounds.validate_prob_vector([0.5, 0.5], 2) == (0.5, 0.5)
        with pytest.raises(ValueError):
            bounds.validate_prob_vector([0.5, 0.6])
        with pytest.raises(ValueError):
            bounds.validate_prob_vector([0.5, 0.5], 3)
        with pytest.raises(ValueError):
            bounds.validate_prob_vector([1.5, -0.5])

    def test_learned_vector_k(self):
        lv = bounds.LearnedProbVector((0.5, 0.5), (0.6, 0.6), 1.2, 100)
        assert lv.k == 2
