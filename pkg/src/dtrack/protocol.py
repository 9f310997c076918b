"""Coordinator/player simulation of the notifications-to-end round framework.

A run repeats rounds until the remaining threshold reaches zero:

* ``N <= 4k``: the coordinator broadcasts a mode switch and every item is
  reported individually until the alarm.
* otherwise the strategy supplies a :class:`~dtrack.strategies.SlackAssignment`;
  the coordinator grants slacks to all ``k`` players, players notify on
  their slack condition, and at the ``ell``-th notification the coordinator
  sends ``k`` collect requests and receives ``k`` counter reports.

Delivery is synchronous and lossless, and at most one counter changes per
time step, so the round outcome depends only on the arrival order. Rounds
are evaluated on blocks of arrivals with numpy; the per-player notification
rule is the one in :meth:`SlackAssignment.notifies`.
"""

from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import bounds
from .errors import ConfigError, InvalidPlayerId, StreamExhausted
from .strategies import (
    DEFAULT_BACKUP_THRESHOLD,
    Algorithm,
    SlackAssignment,
    StrategyState,
)
from .workload import ArrivalSource

logger = logging.getLogger(__name__)

COORDINATOR = -1
_MIN_BLOCK = 4096


class MessageKind(str, enum.Enum):
    SLACK_GRANT = "SlackGrant"
    NOTIFICATION = "Notification"
    COLLECT_REQUEST = "CollectRequest"
    COUNTER_REPORT = "CounterReport"
    MODE_SWITCH = "ModeSwitch"
    ITEM_REPORT = "ItemReport"


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: int
    receiver: int
    payload: tuple = ()

    def __post_init__(self):
        if len(self.payload) > 2:
            raise ValueError("a message carries at most two words")


class PlayerMode(str, enum.Enum):
    IDLE = "Idle"
    SLACKED = "Slacked"
    STRAIGHTFORWARD = "Straightforward"


@dataclass
class PlayerState:
    player_id: int
    counter: int = 0
    base: int = 0
    slack: int | None = None
    notifications_sent: int = 0
    mode: PlayerMode = PlayerMode.IDLE


@dataclass
class CoordinatorState:
    remaining: int
    k: int
    round_number: int = 0
    ell: int = 0
    notifications_received: int = 0
    message_tally: Counter = field(default_factory=Counter)
    active_strategy: str = ""
    items_consumed: int = 0
    alarm_index: int | None = None


@dataclass(frozen=True)
class RoundStats:
    round_number: int
    strategy: str
    remaining_before: int
    remaining_after: int
    slack_grants: int = 0
    notifications: int = 0
    collect_requests: int = 0
    counter_reports: int = 0
    mode_switches: int = 0
    item_reports: int = 0

    @property
    def items_captured(self) -> int:
        return self.remaining_before - self.remaining_after

    @property
    def messages(self) -> dict[str, int]:
        return {
            "slack_grants": self.slack_grants,
            "notifications": self.notifications,
            "collect_requests": self.collect_requests,
            "counter_reports": self.counter_reports,
            "mode_switches": self.mode_switches,
            "item_reports": self.item_reports,
        }

    @property
    def total_messages(self) -> int:
        return sum(self.messages.values())

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class AlgorithmConfig:
    algorithm: Algorithm
    n: int
    k: int
    delta: float = 0.01
    backup_threshold: float | None = DEFAULT_BACKUP_THRESHOLD
    seed: int | None = None
    mu: tuple[float, ...] | None = None
    estimate_mode: str = "cumulative"

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if self.n < 1:
            raise ConfigError(f"N must be >= 1, got {self.n}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.backup_threshold is not None and not (0.0 <= self.backup_threshold <= 1.0):
            raise ConfigError(f"backup threshold must lie in [0, 1], got {self.backup_threshold}")
        if self.estimate_mode not in ("cumulative", "first-round"):
            raise ConfigError(f"unknown estimate mode {self.estimate_mode!r}")
        if self.mu is not None:
            try:
                mu = bounds.validate_prob_vector(self.mu, self.k)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            object.__setattr__(self, "mu", mu)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["algorithm"] = self.algorithm.value
        d["mu"] = list(self.mu) if self.mu is not None else None
        return d


@dataclass(frozen=True)
class RunReport:
    config: dict[str, Any]
    workload: dict[str, Any]
    alarm_index: int
    total_messages: int
    rounds: tuple[RoundStats, ...]
    untracked_series: tuple[tuple[int, float], ...]
    generator: str
    seed: int | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "workload": self.workload,
            "alarm_index": self.alarm_index,
            "total_messages": self.total_messages,
            "rounds": [r.to_dict() for r in self.rounds],
            "untracked_series": [list(p) for p in self.untracked_series],
            "generator": self.generator,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunReport:
        return cls(
            config=dict(d["config"]),
            workload=dict(d["workload"]),
            alarm_index=int(d["alarm_index"]),
            total_messages=int(d["total_messages"]),
            rounds=tuple(RoundStats(**r) for r in d["rounds"]),
            untracked_series=tuple((int(m), float(p)) for m, p in d["untracked_series"]),
            generator=d["generator"],
            seed=d["seed"],
        )


def _id_dtype(k: int):
    if k <= 256:
        return np.uint8
    if k <= 65536:
        return np.uint16
    return np.int64


def _check_ids(chunk: np.ndarray, k: int, offset: int) -> None:
    if len(chunk) == 0:
        return
    lo, hi = int(chunk.min()), int(chunk.max())
    if lo < 0 or hi >= k:
        bad = int(np.flatnonzero((chunk < 0) | (chunk >= k))[0])
        raise InvalidPlayerId(
            f"player id {int(chunk[bad])} at arrival {offset + bad + 1} not in [0, {k})"
        )


def _counter_values(chunk: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Each arriving player's round counter right after its item lands."""
    k = len(counts)
    m = len(chunk)
    ids = chunk.astype(_id_dtype(k), copy=False)
    order = np.argsort(ids, kind="stable")
    per_player = np.bincount(ids, minlength=k)
    starts = np.cumsum(per_player) - per_player
    sorted_ids = ids[order]
    rank = np.empty(m, dtype=np.int64)
    rank[order] = np.arange(1, m + 1, dtype=np.int64) - starts[sorted_ids]
    return counts[chunk] + rank


def _log(log, kind, sender, receiver, payload=()):
    if log is not None:
        log.append(Message(kind, sender, receiver, tuple(payload)))


def execute_round(
    assignment: SlackAssignment,
    coordinator: CoordinatorState,
    players: list[PlayerState],
    source: ArrivalSource,
    log: list[Message] | None = None,
) -> RoundStats:
    """Run one slacked round and update coordinator and player state.

    Message cost is ``k`` slack grants, the notifications up to and including
    the ``ell``-th, ``k`` collect requests and ``k`` counter reports.
    """
    k = coordinator.k
    n_before = coordinator.remaining
    if assignment.k != k:
        raise ValueError(f"assignment covers {assignment.k} players, expected {k}")
    ell = assignment.ell
    bases = np.asarray(assignment.bases, dtype=np.int64)
    slacks = np.asarray(assignment.slacks, dtype=np.int64)

    coordinator.round_number += 1
    coordinator.ell = ell
    coordinator.notifications_received = 0
    coordinator.active_strategy = assignment.strategy
    for p in players:
        p.counter = 0
        p.notifications_sent = 0
        p.base = assignment.bases[p.player_id]
        p.slack = assignment.slacks[p.player_id]
        p.mode = PlayerMode.SLACKED
        _log(log, MessageKind.SLACK_GRANT, COORDINATOR, p.player_id,
             assignment.grant_payload(p.player_id))

    counts = np.zeros(k, dtype=np.int64)
    notified = 0
    taken = 0
    block = min(n_before, _MIN_BLOCK)
    while True:
        chunk = source.peek(block)
        if len(chunk) == 0:
            raise StreamExhausted(coordinator.items_consumed + taken,
                                  coordinator.items_consumed + n_before)
        _check_ids(chunk, k, coordinator.items_consumed + taken)
        values = _counter_values(chunk, counts)
        b = bases[chunk]
        hit = values > b
        hit &= (values - b) % slacks[chunk] == 0
        hit_pos = np.flatnonzero(hit)
        need = ell - notified
        if len(hit_pos) >= need:
            end = int(hit_pos[need - 1]) + 1
            hit_pos = hit_pos[:need]
        else:
            end = len(chunk)
        used = chunk[:end]
        for pos in hit_pos:
            _log(log, MessageKind.NOTIFICATION, int(chunk[pos]), COORDINATOR)
        sent = np.bincount(chunk[hit_pos], minlength=k)
        for p in players:
            p.notifications_sent += int(sent[p.player_id])
        notified += len(hit_pos)
        counts += np.bincount(used, minlength=k)
        source.advance(end)
        taken += end
        if notified >= ell:
            break
        if taken >= n_before:
            # unreachable for valid assignments: the slack rules force the
            # ell-th notification within N items
            raise RuntimeError(f"round {coordinator.round_number} did not end within N items")
        block = min(2 * block, n_before - taken)

    for p in players:
        p.counter = int(counts[p.player_id])
        _log(log, MessageKind.COLLECT_REQUEST, COORDINATOR, p.player_id)
    for p in players:
        _log(log, MessageKind.COUNTER_REPORT, p.player_id, COORDINATOR, (p.counter,))

    captured = int(counts.sum())
    if captured > n_before:
        raise RuntimeError("round captured more items than the remaining threshold")
    coordinator.notifications_received = notified
    coordinator.remaining = n_before - captured
    coordinator.items_consumed += captured
    stats = RoundStats(
        round_number=coordinator.round_number,
        strategy=assignment.strategy,
        remaining_before=n_before,
        remaining_after=coordinator.remaining,
        slack_grants=k,
        notifications=notified,
        collect_requests=k,
        counter_reports=k,
    )
    coordinator.message_tally.update(
        {MessageKind.SLACK_GRANT: k, MessageKind.NOTIFICATION: notified,
         MessageKind.COLLECT_REQUEST: k, MessageKind.COUNTER_REPORT: k}
    )
    if coordinator.remaining == 0:
        coordinator.alarm_index = coordinator.items_consumed
    return stats


def execute_straightforward(
    coordinator: CoordinatorState,
    players: list[PlayerState],
    source: ArrivalSource,
    announce: bool = True,
    log: list[Message] | None = None,
) -> RoundStats:
    """Report every remaining item individually; the alarm fires on the last.

    ``announce`` broadcasts the mode switch to all ``k`` players first, which
    is what happens when the framework hands over mid-run.
    """
    k = coordinator.k
    n_before = coordinator.remaining
    coordinator.round_number += 1
    coordinator.ell = 1
    coordinator.active_strategy = "Straightforward"
    switches = k if announce else 0
    for p in players:
        p.counter = 0
        p.notifications_sent = 0
        p.mode = PlayerMode.STRAIGHTFORWARD
        if announce:
            _log(log, MessageKind.MODE_SWITCH, COORDINATOR, p.player_id)

    items = source.peek(n_before)
    _check_ids(items, k, coordinator.items_consumed)
    if len(items) < n_before:
        raise StreamExhausted(coordinator.items_consumed + len(items),
                              coordinator.items_consumed + n_before)
    source.advance(n_before)
    counts = np.bincount(items, minlength=k)
    for p in players:
        p.counter = int(counts[p.player_id])
    if log is not None:
        for pid in items:
            _log(log, MessageKind.ITEM_REPORT, int(pid), COORDINATOR)

    coordinator.remaining = 0
    coordinator.items_consumed += n_before
    if n_before:
        coordinator.alarm_index = coordinator.items_consumed
    coordinator.message_tally.update(
        {MessageKind.MODE_SWITCH: switches, MessageKind.ITEM_REPORT: n_before}
    )
    return RoundStats(
        round_number=coordinator.round_number,
        strategy="Straightforward",
        remaining_before=n_before,
        remaining_after=0,
        mode_switches=switches,
        item_reports=n_before,
    )


def describe_source(source: ArrivalSource) -> dict[str, Any]:
    dist = getattr(source, "distribution", None)
    if dist is not None:
        return {"kind": "synthetic", "distribution": dist.value, "k": source.k, "seed": source.seed}
    path = getattr(source, "path", None)
    return {"kind": "trace", "path": str(path) if path is not None else None, "k": source.k}


def _resolve_mu(config: AlgorithmConfig, source: ArrivalSource):
    if not config.algorithm.descriptor.needs_distribution:
        return None
    if config.mu is not None:
        return config.mu
    mu = source.probabilities()
    if mu is None:
        raise ConfigError(f"{config.algorithm.label} needs a probability vector (none given)")
    if len(mu) != config.k:
        raise ConfigError(f"source provides {len(mu)} probabilities, expected k={config.k}")
    return mu


def run_framework(
    config: AlgorithmConfig,
    source: ArrivalSource,
    log: list[Message] | None = None,
) -> RunReport:
    """Track ``config.n`` arrivals from ``source`` and report the message cost.

    Consumes exactly ``config.n`` items. Pass a list as ``log`` to receive
    every message in send order (memory grows with the straightforward phase).
    """
    if source.k > config.k:
        raise ConfigError(f"source produces ids up to {source.k - 1} but k={config.k}")
    k = config.k
    algo = config.algorithm
    state = StrategyState(
        algo, k, config.delta, mu=_resolve_mu(config, source),
        backup_threshold=config.backup_threshold, estimate_mode=config.estimate_mode,
    )
    coordinator = CoordinatorState(remaining=config.n, k=k)
    players = [PlayerState(i) for i in range(k)]
    straightforward_cutoff = 4 * k

    rounds: list[RoundStats] = []
    series: list[tuple[int, float]] = [(0, 100.0)]
    total = 0
    while coordinator.remaining > 0:
        n = coordinator.remaining
        if algo is Algorithm.STRAIGHTFORWARD:
            stats = execute_straightforward(coordinator, players, source, announce=False, log=log)
        elif n <= straightforward_cutoff:
            stats = execute_straightforward(coordinator, players, source, announce=True, log=log)
        else:
            assignment = state.round_assignment(n)
            stats = execute_round(assignment, coordinator, players, source, log=log)
            counts = np.fromiter((p.counter for p in players), dtype=np.int64, count=k)
            state.record_round(assignment, n, coordinator.remaining, counts)
        rounds.append(stats)
        total += stats.total_messages
        series.append((total, 100.0 * coordinator.remaining / config.n))
        logger.debug("round %d %s captured %d, %d left", stats.round_number, stats.strategy,
                     stats.items_captured, coordinator.remaining)

    return RunReport(
        config=config.to_dict(),
        workload=describe_source(source),
        alarm_index=coordinator.alarm_index,
        total_messages=total,
        rounds=tuple(rounds),
        untracked_series=tuple(series),
        generator=source.generator,
        seed=source.seed,
    )


def run_algorithm(algorithm, n: int, source: ArrivalSource, delta: float = 0.01, **kwargs) -> RunReport:
    """Shorthand for ``run_framework`` with ``k`` taken from the source."""
    config = AlgorithmConfig(Algorithm.parse(algorithm), n, source.k, delta,
                             seed=source.seed, **kwargs)
    return run_framework(config, source)

