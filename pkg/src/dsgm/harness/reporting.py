"""Run records, aggregates, CSV/JSON output and the trial scheduler."""

from __future__ import annotations

import csv
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

RECORD_COLUMNS = ("setting", "operator", "method", "trial", "replica", "split", "train_acc", "test_acc")


@dataclass(frozen=True)
class Record:
    setting: float
    operator: str
    method: str
    trial: int
    replica: int
    split: int
    train_acc: float
    test_acc: float
    wall_time: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class Aggregate:
    setting: float
    operator: str
    method: str
    count: int
    mean: float
    stderr: float


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class RunResult:
    records: list

    def aggregates(self) -> list:
        """Mean and standard error of test accuracy per (setting, operator, method), in first-seen order."""
        groups: dict[tuple, list] = {}
        for r in self.records:
            groups.setdefault((r.setting, r.operator, r.method), []).append(r.test_acc)
        return [Aggregate(s, o, m, len(v), *mean_stderr(v)) for (s, o, m), v in groups.items()]

    def lookup(self, setting, operator, method) -> Aggregate:
        for a in self.aggregates():
            if math.isclose(a.setting, setting) and a.operator == operator and a.method == method:
                return a
        raise KeyError((setting, operator, method))

    def methods(self) -> list:
        return list(dict.fromkeys(r.method for r in self.records))


def write_records_csv(result: RunResult, path) -> None:
    """One row per trial; wall time is left out so reruns compare byte for byte."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in result.records:
            w.writerow([repr(float(r.setting)), r.operator, r.method, r.trial, r.replica, r.split,
                        repr(float(r.train_acc)), repr(float(r.test_acc))])


def write_summary_csv(result: RunResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["setting", "operator", "method", "count", "mean", "stderr"])
        for a in result.aggregates():
            w.writerow([repr(float(a.setting)), a.operator, a.method, a.count, repr(a.mean), repr(a.stderr)])


def format_table(result: RunResult, setting_label: str = "setting", percent: bool = True) -> str:
    """Methods as columns, (setting, operator) as rows, ``mean (+-stderr)`` cells."""
    aggs = result.aggregates()
    methods = result.methods()
    rows = list(dict.fromkeys((a.setting, a.operator) for a in aggs))
    cell = {(a.setting, a.operator, a.method): a for a in aggs}
    scale = 100.0 if percent else 1.0
    header = [setting_label, "operator"] + methods
    lines = [header]
    for s, o in rows:
        line = [f"{s:g}", o]
        for m in methods:
            a = cell.get((s, o, m))
            line.append("-" if a is None else f"{scale * a.mean:.2f} (+-{scale * a.stderr:.2f})")
        lines.append(line)
    widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in lines)


def versions() -> dict:
    import threadpoolctl

    from .. import __version__

    return {
        "dsgm": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "threadpoolctl": threadpoolctl.__version__,
    }


def write_manifest(path, config: dict, seed: int, wall_time: float, outputs: list, extra: dict | None = None) -> None:
    manifest = {
        "config": config,
        "seed": seed,
        "versions": versions(),
        "wall_time_s": round(wall_time, 3),
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@contextmanager
def limited_threads(n: int):
    """Pin BLAS/OpenMP pools to ``n`` threads so results do not depend on the machine."""
    with threadpool_limits(limits=n):
        yield


def _call(args):
    func, job, threads = args
    with limited_threads(threads):
        t0 = time.perf_counter()
        out = func(job)
        return out, time.perf_counter() - t0


def run_jobs(func, jobs, workers: int = 1, threads: int = 1) -> list:
    """Run ``func(job)`` for every job; results come back in job order.

    With ``workers > 1`` jobs run in a process pool of that size. ``func``
    must then be picklable (a module-level function).
    """
    jobs = list(jobs)
    args = [(func, job, threads) for job in jobs]
    if workers <= 1 or len(jobs) <= 1:
        return [_call(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, args))
