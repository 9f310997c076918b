"""Experiment grids and report serialisation.

Seeds: every workload cell ``(workload, N, k)`` gets index ``c`` in grid order
and replicate ``r`` uses seed
``SeedSequence([grid_seed, c, r]).generate_state(1, uint64)[0]``. The
algorithm is not part of the key, so all algorithms in a cell see the same
arrival sequence.

Output files (``<h>`` is a hash of the grid, or of the reports when no grid
is given; no timestamps):

``totals-<h>.csv``
    run_id, algorithm, distribution, N, k, seed, total_messages, rounds
``series-<h>.csv``
    run_id, round, cumulative_messages, untracked_percent
    (round 0 is the origin point ``(0, 100.0)``)
``reports-<h>.json``
    ``{"schema": 1, "reports": [RunReport.to_dict(), ...]}``
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DTrackError
from .protocol import AlgorithmConfig, RunReport, run_framework
from .strategies import DEFAULT_BACKUP_THRESHOLD, Algorithm
from .workload import Distribution, SyntheticSource, load_trace

logger = logging.getLogger(__name__)

ALL_ALGORITHMS = tuple(a.value for a in Algorithm)
ALL_DISTRIBUTIONS = tuple(d.value for d in Distribution)

TOTALS_COLUMNS = ["run_id", "algorithm", "distribution", "N", "k", "seed", "total_messages", "rounds"]
SERIES_COLUMNS = ["run_id", "round", "cumulative_messages", "untracked_percent"]


def derive_seed(grid_seed: int, cell_index: int, replicate: int) -> int:
    ss = np.random.SeedSequence([grid_seed, cell_index, replicate])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentGrid:
    algorithms: tuple[str, ...]
    n_values: tuple[int, ...]
    k_values: tuple[int, ...] = (16,)
    distributions: tuple[str, ...] = ()
    traces: tuple[str, ...] = ()
    delta: float = 0.01
    replicates: int = 1
    grid_seed: int = 0
    backup_threshold: float | None = DEFAULT_BACKUP_THRESHOLD
    estimate_mode: str = "cumulative"

    def __post_init__(self):
        for name in ("algorithms", "n_values", "k_values", "distributions", "traces"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.algorithms:
            raise ConfigError("grid needs at least one algorithm")
        if not self.n_values:
            raise ConfigError("grid needs at least one N value")
        if self.distributions and not self.k_values:
            raise ConfigError("grid needs at least one k value")
        if not (self.distributions or self.traces):
            raise ConfigError("grid needs at least one distribution or trace")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        for a in self.algorithms:
            Algorithm.parse(a)
        for d in self.distributions:
            Distribution.parse(d)

    @classmethod
    def default(cls, replicates: int = 10, grid_seed: int = 0) -> ExperimentGrid:
        return cls(ALL_ALGORITHMS, (2**20,), (16,), ALL_DISTRIBUTIONS,
                   replicates=replicates, grid_seed=grid_seed)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def cells(self) -> list[dict]:
        """Workload cells in grid order: synthetic first, then traces."""
        out = []
        for dist, n, k in itertools.product(self.distributions, self.n_values, self.k_values):
            out.append({"distribution": Distribution.parse(dist).value, "n": n, "k": k})
        for trace, n in itertools.product(self.traces, self.n_values):
            out.append({"trace": trace, "n": n})
        return out

    def tasks(self) -> list[dict]:
        tasks = []
        for ci, cell in enumerate(self.cells()):
            # a trace replays identically, so one replicate suffices
            reps = 1 if "trace" in cell else self.replicates
            for r in range(reps):
                for algo in self.algorithms:
                    tasks.append({**cell, "cell": ci, "replicate": r, "algorithm": algo,
                                  "seed": derive_seed(self.grid_seed, ci, r)})
        return tasks

    def __len__(self):
        return len(self.tasks())


@dataclass(frozen=True)
class CellError:
    task: dict
    error: str


@dataclass
class GridResult:
    reports: list[RunReport] = field(default_factory=list)
    errors: list[CellError] = field(default_factory=list)

    def __iter__(self):
        return iter(self.reports)

    def __len__(self):
        return len(self.reports)


def _run_task(task: dict, grid: ExperimentGrid) -> RunReport:
    if "trace" in task:
        source = load_trace(task["trace"])
        k = source.k
    else:
        k = task["k"]
        source = SyntheticSource(task["distribution"], k, task["seed"])
    config = AlgorithmConfig(
        Algorithm.parse(task["algorithm"]), task["n"], k, grid.delta,
        backup_threshold=grid.backup_threshold, seed=source.seed,
        estimate_mode=grid.estimate_mode,
    )
    return run_framework(config, source)


def _guarded(args):
    task, grid = args
    try:
        return _run_task(task, grid)
    except (DTrackError, ValueError, OSError) as exc:
        return CellError(task, f"{type(exc).__name__}: {exc}")


def run_grid(grid: ExperimentGrid, workers: int = 1) -> GridResult:
    """Run every task of the grid; one failing cell does not stop the rest.

    Results keep task order whatever the number of ``workers``.
    """
    tasks = [(t, grid) for t in grid.tasks()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_guarded, tasks, chunksize=4))
    else:
        outcomes = [_guarded(t) for t in tasks]
    result = GridResult()
    for out in outcomes:
        if isinstance(out, CellError):
            logger.warning("grid cell failed: %s (%s)", out.task, out.error)
            result.errors.append(out)
        else:
            result.reports.append(out)
    return result


def _workload_label(report: RunReport) -> str:
    w = report.workload
    if w.get("kind") == "synthetic":
        return w["distribution"]
    path = w.get("path")
    return f"trace:{Path(path).name}" if path else "trace"


def totals_rows(reports: Sequence[RunReport]) -> list[list]:
    return [
        [f"{i:05d}", Algorithm.parse(r.config["algorithm"]).label, _workload_label(r),
         r.config["n"], r.config["k"], r.seed, r.total_messages, len(r.rounds)]
        for i, r in enumerate(reports)
    ]


def series_rows(reports: Sequence[RunReport]) -> list[list]:
    rows = []
    for i, r in enumerate(reports):
        for j, (msgs, pct) in enumerate(r.untracked_series):
            rows.append([f"{i:05d}", j, msgs, repr(pct)])
    return rows


def _reports_digest(reports: Sequence[RunReport]) -> str:
    blob = json.dumps([r.to_dict() for r in reports], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _write_csv(path: Path, header: list[str], rows: Iterable[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit_report(reports: Sequence[RunReport], fmt: str, destination: str | os.PathLike,
                grid: ExperimentGrid | None = None) -> list[Path]:
    """Write reports as CSV tables or one JSON document; returns the paths."""
    if not reports:
        raise ValueError("no reports to emit")
    fmt = fmt.lower()
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}")
    dest = Path(destination)
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {dest}: {exc}") from exc
    tag = grid.digest() if grid is not None else _reports_digest(reports)
    try:
        if fmt == "json":
            path = dest / f"reports-{tag}.json"
            doc = {"schema": 1, "reports": [r.to_dict() for r in reports]}
            path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
            return [path]
        totals = dest / f"totals-{tag}.csv"
        series = dest / f"series-{tag}.csv"
        _write_csv(totals, TOTALS_COLUMNS, totals_rows(reports))
        _write_csv(series, SERIES_COLUMNS, series_rows(reports))
        return [totals, series]
    except OSError as exc:
        raise OSError(f"failed writing reports under {dest}: {exc}") from exc


def load_reports(path: str | os.PathLike) -> list[RunReport]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [RunReport.from_dict(d) for d in doc["reports"]]


def mean_totals(reports: Iterable[RunReport]) -> dict[tuple, float]:
    """Mean total messages keyed by ``(algorithm label, workload, N, k)``."""
    groups: dict[tuple, list[int]] = {}
    for r in reports:
        key = (Algorithm.parse(r.config["algorithm"]).label, _workload_label(r),
               r.config["n"], r.config["k"])
        groups.setdefault(key, []).append(r.total_messages)
    return {key: fmean(v) for key, v in groups.items()}
