"""Concentration bounds and round parameters for slack assignment.

Every function here returns an unrounded float. Rounding to integer slacks
happens in :mod:`dtrack.strategies` only.

All logarithms are natural logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

# Multiplier of sqrt(k N ln(k/delta)) in the tracked-item target t.
T_COEFF = math.sqrt(2.0) + 2.0 / 3.0

# Switch-to-CMY constants: rounds run the distribution-aware rule only while
# N > beta * k * ln(k/delta).
BETA_KNOWN = 2.0 * T_COEFF**2
BETA_LEARNED = 2.0 * (2.0 * math.sqrt(2.0) + 2.0 / 3.0 + 3.0) ** 2

PROB_SUM_TOL = 1e-9


def _check_delta(delta: float) -> None:
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k!r}")


def _check_t(t: float) -> None:
    if not t > 0:
        raise ValueError(f"t must be positive, got {t!r}")


def _check_prob(p: float, name: str) -> None:
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {p!r}")


def log_k_over_delta(k: int, delta: float) -> float:
    _check_k(k)
    _check_delta(delta)
    return math.log(k / delta)


def validate_prob_vector(mu: Sequence[float], k: int | None = None) -> tuple[float, ...]:
    """Return ``mu`` as a tuple after checking it is a probability vector.

    Raises ``ValueError`` if an entry is outside [0, 1], the entries do not
    sum to 1 within 1e-9, or the length differs from ``k``.
    """
    mu = tuple(float(m) for m in mu)
    if not mu:
        raise ValueError("probability vector must be nonempty")
    if k is not None and len(mu) != k:
        raise ValueError(f"probability vector has {len(mu)} entries, expected k={k}")
    for i, m in enumerate(mu):
        _check_prob(m, f"mu[{i}]")
    total = math.fsum(mu)
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"probabilities sum to {total!r}, not 1")
    return mu


def bernstein_upper_bound(mu_i: float, t: float, k: int, delta: float) -> float:
    """Count level player ``i`` exceeds within ``t`` items w.p. at most delta/k."""
    _check_prob(mu_i, "mu_i")
    _check_t(t)
    ln = log_k_over_delta(k, delta)
    return mu_i * t + math.sqrt(2.0 * t * mu_i * (1.0 - mu_i) * ln) + (2.0 / 3.0) * ln


def bernstein_lower_bound(mu_i: float, t: float, k: int, delta: float) -> float:
    """Mirror image of :func:`bernstein_upper_bound`; may be negative."""
    _check_prob(mu_i, "mu_i")
    _check_t(t)
    ln = log_k_over_delta(k, delta)
    return mu_i * t - math.sqrt(2.0 * t * mu_i * (1.0 - mu_i) * ln) - (2.0 / 3.0) * ln


def static_t(n_threshold: float, k: int, delta: float) -> float:
    """Number of items a known-distribution round aims to capture.

    ``N - (sqrt(2) + 2/3) * sqrt(k N ln(k/delta))``, clamped at 0.
    """
    if n_threshold < 1:
        raise ValueError(f"n_threshold must be >= 1, got {n_threshold!r}")
    ln = log_k_over_delta(k, delta)
    return max(0.0, n_threshold - T_COEFF * math.sqrt(k * n_threshold * ln))


def slack_sum_check(mu: Sequence[float], t: float, k: int, delta: float) -> float:
    """Sum of the unrounded upper-bound slacks over all players."""
    mu = validate_prob_vector(mu, k)
    return math.fsum(bernstein_upper_bound(m, t, k, delta) for m in mu)


def learned_mu_upper(mu_bar_i: float, w: int, delta: float) -> float:
    """Empirical-Bernstein upper confidence bound on a player's probability.

    Not clamped to 1: the sum over players is allowed to exceed 1.
    """
    _check_prob(mu_bar_i, "mu_bar_i")
    _check_delta(delta)
    if w < 1:
        raise ValueError(f"w must be >= 1, got {w!r}")
    ln3 = math.log(3.0 / delta)
    return mu_bar_i + math.sqrt(2.0 * (mu_bar_i - mu_bar_i * mu_bar_i) * ln3 / w) + 3.0 * ln3 / w


def learned_ub(mu_hat_i: float, t: float, k: int, delta: float) -> float:
    # variance factor is mu_hat itself, without (1 - mu_hat)
    if mu_hat_i < 0:
        raise ValueError(f"mu_hat_i must be >= 0, got {mu_hat_i!r}")
    _check_t(t)
    ln = log_k_over_delta(k, delta)
    return mu_hat_i * t + math.sqrt(2.0 * t * mu_hat_i * ln) + (2.0 / 3.0) * ln


def learned_t(n_threshold: float, sigma_hat: float, k: int, delta: float) -> float:
    """:func:`static_t` evaluated at the effective threshold ``N / sigma_hat``."""
    if sigma_hat < 1.0:
        raise ValueError(f"sigma_hat must be >= 1, got {sigma_hat!r}")
    if n_threshold < 1:
        raise ValueError(f"n_threshold must be >= 1, got {n_threshold!r}")
    ln = log_k_over_delta(k, delta)
    effective = n_threshold / sigma_hat
    return max(0.0, effective - T_COEFF * math.sqrt(k * effective * ln))


def switch_thresholds(k: int, delta: float, learned: bool) -> tuple[int, float]:
    """Return ``(4k, beta * k * ln(k/delta))``.

    A round with ``N <= 4k`` runs the straightforward algorithm; one with
    ``N <= beta k ln(k/delta)`` runs CMY.
    """
    beta = BETA_LEARNED if learned else BETA_KNOWN
    return 4 * k, beta * k * log_k_over_delta(k, delta)


@dataclass(frozen=True)
class LearnedProbVector:
    """Empirical frequencies and their upper confidence bounds."""

    mu_bar: tuple[float, ...]
    mu_hat: tuple[float, ...]
    sigma_hat: float
    w: int

    @property
    def k(self) -> int:
        return len(self.mu_bar)


@dataclass(frozen=True)
class BoundParams:
    n_threshold: int
    k: int
    delta: float

    def __post_init__(self):
        if self.n_threshold < 1:
            raise ValueError(f"n_threshold must be >= 1, got {self.n_threshold!r}")
        _check_k(self.k)
        _check_delta(self.delta)
