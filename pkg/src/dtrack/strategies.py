"""The tracking algorithms as slack rules for the round framework.

Every slacked round is described by a :class:`SlackAssignment`: player ``i``
holds a base ``b_i`` and a slack ``s_i`` and notifies the coordinator each time
its round counter reaches ``b_i + j * s_i`` for ``j = 1, 2, ...``. The round
ends at the ``ell``-th notification. With ``b_i = 0`` this covers CMY
("every s increments"), UniSlk and the static-slack rules (only the first
notification matters when ``ell = 1``); the dynamic-slack rules use a
positive base.

Real-valued slacks are floored here and nowhere else, and every slack is
kept at 1 or more so each round consumes at least one item.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import bounds
from .bounds import LearnedProbVector
from .errors import ConfigError, EmptySample

DEFAULT_BACKUP_THRESHOLD = 0.75


class Algorithm(str, enum.Enum):
    STRAIGHTFORWARD = "straightforward"
    UNISLK = "unislk"
    CMY = "cmy"
    STCSLK_KWNDST = "stcslk-kwndst"
    DYNSLK_KWNDST = "dynslk-kwndst"
    STCSLK_LRNDST = "stcslk-lrndst"
    DYNSLK_LRNDST = "dynslk-lrndst"

    @classmethod
    def parse(cls, name: str | Algorithm) -> Algorithm:
        if isinstance(name, Algorithm):
            return name
        key = name.strip().lower().replace("_", "").replace("-", "")
        for algo in cls:
            if algo.value.replace("-", "") == key:
                return algo
        choices = ", ".join(a.value for a in cls)
        raise ConfigError(f"unknown algorithm {name!r} (choose from {choices})")

    @property
    def descriptor(self) -> StrategyDescriptor:
        return DESCRIPTORS[self]

    @property
    def label(self) -> str:
        return self.descriptor.name


@dataclass(frozen=True)
class StrategyDescriptor:
    name: str
    ell: int | str  # 1 or "k"
    needs_distribution: bool
    learns: bool
    # None: the algorithm never hands over to CMY near the end of a run
    beta: float | None = None

    def ell_for(self, k: int) -> int:
        return k if self.ell == "k" else int(self.ell)

    @property
    def proposed(self) -> bool:
        return self.beta is not None


DESCRIPTORS = {
    Algorithm.STRAIGHTFORWARD: StrategyDescriptor("Straightforward", 1, False, False),
    Algorithm.UNISLK: StrategyDescriptor("UniSlk", 1, False, False),
    Algorithm.CMY: StrategyDescriptor("CMY", "k", False, False),
    Algorithm.STCSLK_KWNDST: StrategyDescriptor("StcSlkKwnDst", 1, True, False, bounds.BETA_KNOWN),
    Algorithm.DYNSLK_KWNDST: StrategyDescriptor("DynSlkKwnDst", "k", True, False, bounds.BETA_KNOWN),
    Algorithm.STCSLK_LRNDST: StrategyDescriptor("StcSlkLrnDst", 1, False, True, bounds.BETA_LEARNED),
    Algorithm.DYNSLK_LRNDST: StrategyDescriptor("DynSlkLrnDst", "k", False, True, bounds.BETA_LEARNED),
}


@dataclass(frozen=True)
class SlackAssignment:
    """Per-round slack parameters broadcast by the coordinator."""

    strategy: str
    bases: tuple[int, ...]
    slacks: tuple[int, ...]
    ell: int
    t: float | None = None

    def __post_init__(self):
        if len(self.bases) != len(self.slacks):
            raise ValueError("bases and slacks differ in length")
        if any(s < 1 for s in self.slacks):
            raise ValueError("every slack must be >= 1")
        if any(b < 0 for b in self.bases):
            raise ValueError("bases must be nonnegative")
        if not 1 <= self.ell:
            raise ValueError("ell must be >= 1")

    @property
    def k(self) -> int:
        return len(self.slacks)

    def grant_payload(self, i: int) -> tuple[int, ...]:
        """What the slack-grant message to player ``i`` carries."""
        if self.strategy in _PAIR_STRATEGIES:
            return (self.bases[i], self.slacks[i])
        return (self.slacks[i],)

    def notifies(self, i: int, n_i: int) -> bool:
        """Whether the increment taking player ``i`` to ``n_i`` sends a notification."""
        surplus = n_i - self.bases[i]
        return surplus > 0 and surplus % self.slacks[i] == 0

    def notifications(self, counts: Sequence[int]) -> int:
        """Total notifications sent once the round counters reach ``counts``."""
        c = np.asarray(counts, dtype=np.int64)
        surplus = np.maximum(c - np.asarray(self.bases, dtype=np.int64), 0)
        return int((surplus // np.asarray(self.slacks, dtype=np.int64)).sum())


_PAIR_STRATEGIES = {"DynSlkKwnDst", "DynSlkLrnDst"}


def _uniform(name: str, slack: int, k: int, ell: int) -> SlackAssignment:
    return SlackAssignment(name, (0,) * k, (slack,) * k, ell)


def cmy_slack(n_threshold: int, k: int) -> int:
    """``floor(N / 2k)``, at least 1."""
    return max(1, n_threshold // (2 * k))


def unislk_slack(n_threshold: int, k: int) -> int:
    """``ceil(N / k)``, at least 1."""
    return max(1, -(-n_threshold // k))


def cmy_assignment(n_threshold: int, k: int) -> SlackAssignment:
    return _uniform("CMY", cmy_slack(n_threshold, k), k, k)


def unislk_assignment(n_threshold: int, k: int) -> SlackAssignment:
    return _uniform("UniSlk", unislk_slack(n_threshold, k), k, 1)


def _floor_guarded(x: float) -> int:
    return max(1, math.floor(x))


def _floor_bases(weights: Sequence[float], t: float) -> tuple[int, ...]:
    """``floor(w_i t)`` scaled back if needed so the bases sum to at most ``floor(t)``."""
    raw = [math.floor(w * t) for w in weights]
    if sum(raw) <= math.floor(t):
        return tuple(raw)
    total = math.fsum(weights)
    scaled = [math.floor(w * t / total) for w in weights]
    # floating error in the division can still leave a unit of excess
    excess = sum(scaled) - math.floor(t)
    for i in sorted(range(len(scaled)), key=lambda j: -scaled[j]):
        if excess <= 0:
            break
        take = min(excess, scaled[i])
        scaled[i] -= take
        excess -= take
    return tuple(scaled)


def stcslk_slacks(mu: Sequence[float], n_threshold: int, k: int, delta: float) -> list[int]:
    mu = bounds.validate_prob_vector(mu, k)
    t = bounds.static_t(n_threshold, k, delta)
    if t <= 0:
        raise ValueError(f"N={n_threshold} is too small for a static-slack round (t=0)")
    return [_floor_guarded(bounds.bernstein_upper_bound(m, t, k, delta)) for m in mu]


def dynslk_slacks(mu: Sequence[float], n_threshold: int, k: int, delta: float) -> list[tuple[int, int]]:
    """(base, slack) pairs; the slack value is shared by all players."""
    mu = bounds.validate_prob_vector(mu, k)
    t = bounds.static_t(n_threshold, k, delta)
    if t <= 0:
        raise ValueError(f"N={n_threshold} is too small for a dynamic-slack round (t=0)")
    s = _floor_guarded((n_threshold - t) / (2 * k))
    return [(b, s) for b in _floor_bases(mu, t)]


def stcslk_assignment(mu, n_threshold: int, k: int, delta: float) -> SlackAssignment:
    t = bounds.static_t(n_threshold, k, delta)
    if t <= 0:
        return cmy_assignment(n_threshold, k)
    slacks = stcslk_slacks(mu, n_threshold, k, delta)
    return SlackAssignment("StcSlkKwnDst", (0,) * k, tuple(slacks), 1, t)


def dynslk_assignment(mu, n_threshold: int, k: int, delta: float) -> SlackAssignment:
    t = bounds.static_t(n_threshold, k, delta)
    if t <= 0 or (n_threshold - t) // (2 * k) < 1:
        return cmy_assignment(n_threshold, k)
    pairs = dynslk_slacks(mu, n_threshold, k, delta)
    return SlackAssignment(
        "DynSlkKwnDst", tuple(b for b, _ in pairs), tuple(s for _, s in pairs), k, t
    )


def estimate_distribution(cumulative_counts: Sequence[int], delta: float) -> LearnedProbVector:
    counts = [int(c) for c in cumulative_counts]
    if any(c < 0 for c in counts):
        raise ValueError("counts must be nonnegative")
    w = sum(counts)
    if w == 0:
        raise EmptySample("no items observed; cannot estimate a distribution")
    mu_bar = tuple(c / w for c in counts)
    mu_hat = tuple(bounds.learned_mu_upper(m, w, delta) for m in mu_bar)
    return LearnedProbVector(mu_bar, mu_hat, math.fsum(mu_hat), w)


def lrn_round_parameters(
    learned: LearnedProbVector, n_threshold: int, k: int, delta: float, dynamic: bool
) -> SlackAssignment:
    """Slack assignment of a learned-distribution round.

    Falls back to a CMY round when the learned target ``t`` is zero or the
    shared dynamic slack would floor to zero.
    """
    if learned.k != k:
        raise ValueError(f"estimate covers {learned.k} players, expected {k}")
    sigma_hat = max(1.0, learned.sigma_hat)
    t = bounds.learned_t(n_threshold, sigma_hat, k, delta)
    if t <= 0:
        return cmy_assignment(n_threshold, k)
    if dynamic:
        if (n_threshold - t) // (2 * k) < 1:
            return cmy_assignment(n_threshold, k)
        s = _floor_guarded((n_threshold - t) / (2 * k))
        bases = _floor_bases(learned.mu_hat, t)
        return SlackAssignment("DynSlkLrnDst", bases, (s,) * k, k, t)
    slacks = tuple(_floor_guarded(bounds.learned_ub(m, t, k, delta)) for m in learned.mu_hat)
    return SlackAssignment("StcSlkLrnDst", (0,) * k, slacks, 1, t)


def backup_check(n_before: int, n_after: int, threshold_ratio: float) -> bool:
    """True when the round captured a fraction of ``n_before`` strictly below the ratio."""
    if n_before <= 0:
        raise ValueError("n_before must be positive")
    return (n_before - n_after) / n_before < threshold_ratio


@dataclass
class StrategyState:
    """Per-run strategy memory: learning counts, CMY lock and backup demotion.

    ``round_assignment`` is asked for the slacks of every round that the
    framework does not hand to the straightforward algorithm.
    """

    algorithm: Algorithm
    k: int
    delta: float
    mu: tuple[float, ...] | None = None
    backup_threshold: float | None = DEFAULT_BACKUP_THRESHOLD
    estimate_mode: str = "cumulative"
    cumulative_counts: np.ndarray = field(init=False)
    first_round_counts: np.ndarray | None = field(default=None, init=False)
    cmy_locked: bool = field(default=False, init=False)
    demoted: bool = field(default=False, init=False)
    rounds_seen: int = field(default=0, init=False)

    def __post_init__(self):
        self.algorithm = Algorithm.parse(self.algorithm)
        if self.estimate_mode not in ("cumulative", "first-round"):
            raise ConfigError(f"unknown estimate mode {self.estimate_mode!r}")
        self.cumulative_counts = np.zeros(self.k, dtype=np.int64)
        desc = self.algorithm.descriptor
        if desc.needs_distribution:
            if self.mu is None:
                raise ConfigError(f"{desc.name} needs a probability vector")
            try:
                self.mu = bounds.validate_prob_vector(self.mu, self.k)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    @property
    def descriptor(self) -> StrategyDescriptor:
        return self.algorithm.descriptor

    def cmy_cutoff(self) -> float | None:
        beta = self.descriptor.beta
        if beta is None:
            return None
        return beta * self.k * bounds.log_k_over_delta(self.k, self.delta)

    def estimate(self) -> LearnedProbVector:
        if self.estimate_mode == "first-round":
            counts = self.first_round_counts
        else:
            counts = self.cumulative_counts
        return estimate_distribution(counts, self.delta)

    def round_assignment(self, n_threshold: int) -> SlackAssignment:
        algo, k = self.algorithm, self.k
        if algo is Algorithm.UNISLK:
            return unislk_assignment(n_threshold, k)
        if algo is Algorithm.STRAIGHTFORWARD:
            raise ValueError("the straightforward algorithm has no slacked rounds")
        if algo is Algorithm.CMY or self.demoted or self.cmy_locked:
            return cmy_assignment(n_threshold, k)
        if n_threshold <= self.cmy_cutoff():
            # small remaining threshold: CMY for the rest of the run
            self.cmy_locked = True
            return cmy_assignment(n_threshold, k)
        if algo is Algorithm.STCSLK_KWNDST:
            return stcslk_assignment(self.mu, n_threshold, k, self.delta)
        if algo is Algorithm.DYNSLK_KWNDST:
            return dynslk_assignment(self.mu, n_threshold, k, self.delta)
        if self.rounds_seen == 0:
            # learned variants run CMY first to collect a sample
            return cmy_assignment(n_threshold, k)
        return lrn_round_parameters(
            self.estimate(), n_threshold, k, self.delta,
            dynamic=algo is Algorithm.DYNSLK_LRNDST,
        )

    def record_round(self, assignment: SlackAssignment, n_before: int, n_after: int,
                     counts: np.ndarray) -> None:
        self.rounds_seen += 1
        self.cumulative_counts += counts
        if self.first_round_counts is None:
            self.first_round_counts = np.array(counts, dtype=np.int64)
        if (
            self.backup_threshold is not None
            and assignment.strategy == self.descriptor.name
            and self.descriptor.proposed
            and backup_check(n_before, n_after, self.backup_threshold)
        ):
            self.demoted = True
