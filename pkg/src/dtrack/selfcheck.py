"""Re-derive the bound formulas at 50 digits and compare with :mod:`dtrack.bounds`.

The reference expressions are written directly in mpmath and share no code
with the float implementations they check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import mpmath
from mpmath import mpf

from . import bounds

REL_TOL = 1e-9


@dataclass(frozen=True)
class OracleCase:
    name: str
    actual: Callable[[], float]
    expected: Callable[[], mpf]


def _ln(k, delta):
    return mpmath.log(mpf(k) / mpf(delta))


def _ub(mu, t, k, delta):
    mu, t = mpf(mu), mpf(t)
    return mu * t + mpmath.sqrt(2 * t * mu * (1 - mu) * _ln(k, delta)) + mpf(2) / 3 * _ln(k, delta)


def _lb(mu, t, k, delta):
    mu, t = mpf(mu), mpf(t)
    return mu * t - mpmath.sqrt(2 * t * mu * (1 - mu) * _ln(k, delta)) - mpf(2) / 3 * _ln(k, delta)


def _c():
    return mpmath.sqrt(2) + mpf(2) / 3


def _t(n, k, delta):
    n = mpf(n)
    return max(mpf(0), n - _c() * mpmath.sqrt(k * n * _ln(k, delta)))


def _mu_hat(mu_bar, w, delta):
    mu_bar, w = mpf(mu_bar), mpf(w)
    ln3 = mpmath.log(3 / mpf(delta))
    return mu_bar + mpmath.sqrt(2 * (mu_bar - mu_bar**2) * ln3 / w) + 3 * ln3 / w


def _learned_ub(mu_hat, t, k, delta):
    mu_hat, t = mpf(mu_hat), mpf(t)
    return mu_hat * t + mpmath.sqrt(2 * t * mu_hat * _ln(k, delta)) + mpf(2) / 3 * _ln(k, delta)


def cases() -> list[OracleCase]:
    d = 0.01
    n20 = 2**20
    t20 = float(_t(n20, 16, d))
    return [
        OracleCase("upper bound mu=0", lambda: bounds.bernstein_upper_bound(0.0, 1000, 4, d),
                   lambda: _ub(0, 1000, 4, d)),
        OracleCase("upper bound mu=1", lambda: bounds.bernstein_upper_bound(1.0, 1000, 4, d),
                   lambda: _ub(1, 1000, 4, d)),
        OracleCase("upper bound mu=0.25", lambda: bounds.bernstein_upper_bound(0.25, 1000, 4, d),
                   lambda: _ub(mpf("0.25"), 1000, 4, d)),
        OracleCase("lower bound mu=0.25", lambda: bounds.bernstein_lower_bound(0.25, 1000, 4, d),
                   lambda: _lb(mpf("0.25"), 1000, 4, d)),
        OracleCase("t(N=2^20, k=16)", lambda: bounds.static_t(n20, 16, d), lambda: _t(n20, 16, d)),
        OracleCase("slack sum uniform k=16",
                   lambda: bounds.slack_sum_check([1 / 16] * 16, t20, 16, d),
                   lambda: 16 * _ub(mpf(1) / 16, t20, 16, d)),
        OracleCase("mu_hat(0.5, w=2^19)", lambda: bounds.learned_mu_upper(0.5, 2**19, d),
                   lambda: _mu_hat(mpf("0.5"), 2**19, d)),
        OracleCase("learned UB(0.26, t=1e6)", lambda: bounds.learned_ub(0.26, 1e6, 16, d),
                   lambda: _learned_ub(mpf("0.26"), 10**6, 16, d)),
        OracleCase("learned t(sigma=1.05)", lambda: bounds.learned_t(n20, 1.05, 16, d),
                   lambda: _t(mpf(n20) / mpf("1.05"), 16, d)),
        OracleCase("beta known", lambda: bounds.BETA_KNOWN, lambda: 2 * _c() ** 2),
        OracleCase("beta learned", lambda: bounds.BETA_LEARNED,
                   lambda: 2 * (2 * mpmath.sqrt(2) + mpf(2) / 3 + 3) ** 2),
        OracleCase("CMY cutoff k=4", lambda: bounds.switch_thresholds(4, d, False)[1],
                   lambda: 2 * _c() ** 2 * 4 * _ln(4, d)),
    ]


def run() -> list[tuple[str, bool, float, float]]:
    """Evaluate every case; returns ``(name, passed, actual, expected)`` rows."""
    rows = []
    with mpmath.workdps(50):
        for case in cases():
            actual = case.actual()
            expected = case.expected()
            scale = max(abs(expected), mpf(1e-300))
            ok = abs(mpf(actual) - expected) / scale <= REL_TOL
            rows.append((case.name, bool(ok), actual, float(expected)))
    return rows
