"""Arrival sources: seeded synthetic distributions and trace replay.

A source yields player ids in ``[0, k)``. The framework reads it in blocks
through :meth:`ArrivalSource.peek` and :meth:`ArrivalSource.advance`, so items
that are looked at but not consumed by one round are seen again by the next.

Synthetic sources draw from numpy's ``PCG64`` bit generator and convert its
raw 64-bit output to player ids with a fixed inverse-CDF rule (53-bit uniform,
then a table lookup or normal quantile). Only the bit generator's raw stream
is relied on, which numpy keeps stable across versions and platforms.
"""

from __future__ import annotations

import enum
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .errors import ConfigError, InvalidPlayerId, ParseError

GENERATOR_ID = "numpy.PCG64/raw53-inverse-cdf/v1"

_ID_DTYPE = np.int32


class Distribution(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"
    ZIPFIAN = "zipfian"
    EXPONENTIAL = "exponential"

    @classmethod
    def parse(cls, name: str | Distribution) -> Distribution:
        if isinstance(name, Distribution):
            return name
        try:
            return cls(name.strip().lower())
        except ValueError:
            choices = ", ".join(d.value for d in cls)
            raise ConfigError(f"unknown distribution {name!r} (choose from {choices})") from None


def _gaussian_params(k: int) -> tuple[float, float]:
    # mean k/2, standard deviation k/6
    return k / 2.0, k / 6.0


def exact_probabilities(distribution: str | Distribution, k: int) -> tuple[float, ...]:
    """Cell probabilities realised by the synthetic sampler for ``k`` players.

    For the Gaussian this is the normal mass of ``[i, i+1)`` conditioned on
    ``[0, k)``, which is what drawing, flooring and rejecting produces.
    """
    dist = Distribution.parse(distribution)
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    idx = np.arange(k, dtype=np.float64)
    if dist is Distribution.UNIFORM:
        weights = np.ones(k)
    elif dist is Distribution.ZIPFIAN:
        weights = 1.0 / np.sqrt(idx + 1.0)
    elif dist is Distribution.EXPONENTIAL:
        weights = np.exp(-idx)
    else:
        mean, sd = _gaussian_params(k)
        edges = special.ndtr((np.arange(k + 1, dtype=np.float64) - mean) / sd)
        weights = np.diff(edges)
    probs = weights / math.fsum(weights)
    return tuple(float(p) for p in probs)


class ArrivalSource:
    """Single-consumer stream of player ids with block lookahead."""

    k: int
    generator: str
    seed: int | None = None

    def __init__(self):
        self._buffer = np.empty(0, dtype=_ID_DTYPE)
        self.consumed = 0

    def _fill(self, n: int) -> None:
        """Grow the buffer to at least ``n`` items if the stream allows."""
        raise NotImplementedError

    def peek(self, n: int) -> np.ndarray:
        """Return (without consuming) up to ``n`` upcoming ids."""
        if len(self._buffer) < n:
            self._fill(n)
        return self._buffer[:n]

    def advance(self, n: int) -> None:
        if n > len(self._buffer):
            raise ValueError("cannot advance past peeked items")
        self._buffer = self._buffer[n:]
        self.consumed += n

    def next_arrival(self) -> int | None:
        """Consume one id, or return ``None`` at end of stream."""
        head = self.peek(1)
        if len(head) == 0:
            return None
        self.advance(1)
        return int(head[0])

    def __iter__(self):
        while True:
            item = self.next_arrival()
            if item is None:
                return
            yield item

    def probabilities(self) -> tuple[float, ...] | None:
        """Per-player probabilities for known-distribution strategies, if any."""
        return None


class SyntheticSource(ArrivalSource):
    def __init__(self, distribution: str | Distribution, k: int, seed: int = 0):
        super().__init__()
        self.distribution = Distribution.parse(distribution)
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        self.k = k
        self.seed = int(seed)
        self.generator = GENERATOR_ID
        self._bitgen = np.random.PCG64(np.random.SeedSequence(self.seed))
        self._probs = exact_probabilities(self.distribution, k)
        self._cdf = np.cumsum(np.asarray(self._probs))

    def _uniforms(self, n: int) -> np.ndarray:
        raw = self._bitgen.random_raw(n)
        return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

    def _draw(self, n: int) -> np.ndarray:
        k = self.k
        if self.distribution is Distribution.UNIFORM:
            return np.minimum((self._uniforms(n) * k).astype(_ID_DTYPE), k - 1)
        if self.distribution is Distribution.GAUSSIAN:
            mean, sd = _gaussian_params(k)
            out = []
            have = 0
            while have < n:
                # every accepted draw is kept (possibly more than n) so the
                # id sequence does not depend on how callers chunk their reads
                x = np.floor(mean + sd * special.ndtri(self._uniforms(n - have)))
                x = x[(x >= 0) & (x < k)]
                out.append(x)
                have += len(x)
            return np.concatenate(out).astype(_ID_DTYPE)
        ids = np.searchsorted(self._cdf, self._uniforms(n), side="right")
        return np.minimum(ids, k - 1).astype(_ID_DTYPE)

    def _fill(self, n: int) -> None:
        need = n - len(self._buffer)
        self._buffer = np.concatenate([self._buffer, self._draw(max(need, 1024))])

    def probabilities(self) -> tuple[float, ...]:
        return self._probs

    def __repr__(self):
        return f"SyntheticSource({self.distribution.value!r}, k={self.k}, seed={self.seed})"


class TraceSource(ArrivalSource):
    """Replays a fixed sequence of player ids."""

    def __init__(self, ids: Sequence[int] | np.ndarray, k: int | None = None, path=None):
        super().__init__()
        arr = np.asarray(ids, dtype=np.int64).reshape(-1)
        if len(arr) and arr.min() < 0:
            bad = int(np.flatnonzero(arr < 0)[0])
            raise InvalidPlayerId(f"negative player id {int(arr[bad])} at position {bad}")
        inferred = int(arr.max()) + 1 if len(arr) else 0
        self.k = inferred if k is None else int(k)
        if len(arr) and inferred > self.k:
            bad = int(np.flatnonzero(arr >= self.k)[0])
            raise InvalidPlayerId(f"player id {int(arr[bad])} at position {bad} not in [0, {self.k})")
        self._ids = arr.astype(_ID_DTYPE)
        self._buffer = self._ids
        self.path = path
        self.generator = f"trace:{os.fspath(path)}" if path is not None else "trace"

    def __len__(self):
        return len(self._ids)

    def _fill(self, n: int) -> None:
        # the whole trace is buffered from the start
        pass

    def frequencies(self) -> tuple[float, ...]:
        """Whole-trace frequency of each player."""
        if len(self._ids) == 0:
            raise ConfigError("cannot compute frequencies of an empty trace")
        counts = np.bincount(self._ids, minlength=self.k)
        return tuple(float(c) / len(self._ids) for c in counts)

    def probabilities(self) -> tuple[float, ...]:
        return self.frequencies()

    def __repr__(self):
        return f"TraceSource(n={len(self._ids)}, k={self.k}, path={self.path!r})"


def load_trace(path: str | os.PathLike, k: int | None = None) -> TraceSource:
    """Read a trace file: one decimal player id per line.

    Blank lines and lines starting with ``#`` are skipped. ``k`` defaults to
    the largest id plus one.
    """
    ids: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                value = int(text, 10)
            except ValueError:
                raise ParseError(path, lineno, f"expected a decimal player id, got {text!r}") from None
            if value < 0:
                raise InvalidPlayerId(f"{path}:{lineno}: negative player id {value}")
            if k is not None and value >= k:
                raise InvalidPlayerId(f"{path}:{lineno}: player id {value} not in [0, {k})")
            ids.append(value)
    return TraceSource(ids, k=k, path=Path(path))


def write_trace(path: str | os.PathLike, ids: Iterable[int], header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        fh.writelines(f"{int(i)}\n" for i in ids)


def make_source(distribution: str | None = None, k: int | None = None, seed: int = 0,
                trace: str | os.PathLike | None = None) -> ArrivalSource:
    if (distribution is None) == (trace is None):
        raise ConfigError("exactly one of a distribution or a trace path is required")
    if trace is not None:
        return load_trace(trace, k=k)
    if k is None:
        raise ConfigError("k is required for synthetic workloads")
    return SyntheticSource(distribution, k, seed)
