"""Simulated outlier-detection study on random comparison graphs.

A random total order is the ground truth; SN comparisons are drawn on
random pairs in the ground-truth direction, and round(OP * SN) of them are
reversed. Each method reports an outlier set that is scored by precision,
recall and F1 against the reversed records.
"""
from __future__ import annotations

import csv
import io
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import ComparisonDataset, build_operator
from .lasso import lasso_select_k
from .solvers import alts, iht, ilts

__all__ = [
    "METHODS",
    "DEFAULT_SN",
    "DEFAULT_OP",
    "ExperimentSpec",
    "TrialResult",
    "MetricsRow",
    "MetricsTable",
    "generate_instance",
    "evaluate_detection",
    "run_method",
    "run_trial",
    "run_experiment",
    "run_grid",
]

log = logging.getLogger(__name__)

METHODS = ("lasso", "iht", "ilts", "alts")
DEFAULT_SN = (1000, 2000, 3000)
DEFAULT_OP = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40)


@dataclass(frozen=True)
class ExperimentSpec:
    n: int = 16
    SN: int = 1000
    OP: float = 0.1
    trials: int = 100
    seed: int = 0
    methods: tuple = METHODS
    value_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.n < 2:
            raise ValueError("need at least two items")
        if self.SN < 1:
            raise ValueError("SN must be positive")
        if not 0 <= self.OP < 1:
            raise ValueError("OP must lie in [0, 1)")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if self.ON > self.SN:
            raise ValueError("ON exceeds SN")

    @property
    def ON(self) -> int:
        return int(round(self.OP * self.SN))


@dataclass
class Instance:
    dataset: ComparisonDataset
    order: np.ndarray        # items from best to worst
    s_star: np.ndarray
    outliers: np.ndarray     # record indices that were reversed


def _rng(spec: ExperimentSpec, trial_index: int) -> np.random.Generator:
    key = [spec.seed, trial_index, spec.n, spec.SN, int(round(spec.OP * 1_000_000))]
    return np.random.default_rng(np.random.SeedSequence(key))


def generate_instance(spec: ExperimentSpec, trial_index: int) -> Instance:
    rng = _rng(spec, trial_index)
    n = spec.n
    order = rng.permutation(n)
    s_star = np.empty(n)
    s_star[order] = np.arange(n - 1, -1, -1, dtype=float)
    pi, pj = np.triu_indices(n, k=1)
    pick = rng.integers(len(pi), size=spec.SN)
    i, j = pi[pick], pj[pick]
    y = np.where(s_star[i] > s_star[j], spec.value_scale, -spec.value_scale)
    flipped = np.sort(rng.choice(spec.SN, size=spec.ON, replace=False))
    y[flipped] = -y[flipped]
    ds = ComparisonDataset(n, i, j, y)
    return Instance(ds, order, s_star, flipped)


def evaluate_detection(reported, truth) -> tuple[float, float, float]:
    reported, truth = set(map(int, reported)), set(map(int, truth))
    hit = len(reported & truth)
    if reported:
        precision = hit / len(reported)
    else:
        precision = 1.0 if not truth else 0.0
    recall = hit / len(truth) if truth else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def run_method(method: str, dataset: ComparisonDataset, K: int, seed: int = 0, op=None):
    """Run one detector and return ``(reported indices, outcome)``."""
    op = build_operator(dataset) if op is None else op
    if method == "lasso":
        sel = lasso_select_k(dataset, K, op=op)
        return sel.point.support, sel
    if method == "iht":
        out = iht(dataset, K, op=op)
    elif method == "ilts":
        out = ilts(dataset, K, op=op, rng_seed=seed)
    elif method == "alts":
        out = alts(dataset, op=op, rng_seed=seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out.outlier_indices, out


@dataclass
class TrialResult:
    method: str
    SN: int
    OP: float
    trial: int
    precision: float = float("nan")
    recall: float = float("nan")
    f1: float = float("nan")
    reported: int = 0
    khat: int | None = None
    iterations: int = 0
    seconds: float = 0.0
    error: str | None = None


def run_trial(spec: ExperimentSpec, trial_index: int) -> list[TrialResult]:
    inst = generate_instance(spec, trial_index)
    op = build_operator(inst.dataset)
    tie_seed = [spec.seed, trial_index, 7919]
    rows = []
    for method in spec.methods:
        row = TrialResult(method, spec.SN, spec.OP, trial_index)
        t0 = time.perf_counter()
        try:
            reported, out = run_method(method, inst.dataset, spec.ON, seed=tie_seed, op=op)
        except Exception as exc:  # recorded per cell, never dropped silently
            row.seconds = time.perf_counter() - t0
            row.error = f"{type(exc).__name__}: {exc}"
            log.warning("trial %d %s failed: %s", trial_index, method, row.error)
            rows.append(row)
            continue
        row.seconds = time.perf_counter() - t0
        row.precision, row.recall, row.f1 = evaluate_detection(reported, inst.outliers)
        row.reported = len(reported)
        row.khat = getattr(out, "khat", None)
        row.iterations = getattr(out, "iterations", getattr(out, "grid_points", 0))
        rows.append(row)
    return rows


@dataclass
class MetricsRow:
    method: str
    SN: int
    OP: float
    precision: float
    recall: float
    f1: float
    seconds: float
    failures: int
    trials: int


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(round(x, 12)) if np.isfinite(x) else "nan"
    return str(x)


@dataclass
class MetricsTable:
    rows: list = field(default_factory=list)
    trials: list = field(default_factory=list)

    COLUMNS = ("method", "SN", "OP", "precision", "recall", "f1", "seconds", "failures")
    TRIAL_COLUMNS = ("method", "SN", "OP", "trial", "precision", "recall", "f1",
                     "reported", "khat", "iterations", "seconds", "error")

    @classmethod
    def from_trials(cls, results, methods=METHODS) -> "MetricsTable":
        results = sorted(results, key=lambda r: (methods.index(r.method), r.SN, r.OP, r.trial))
        cells: dict = {}
        for r in results:
            cells.setdefault((r.method, r.SN, r.OP), []).append(r)
        rows = []
        for (method, sn, op), rs in cells.items():
            ok = [r for r in rs if r.error is None]
            mean = (lambda a: float(np.mean(a)) if ok else float("nan"))
            rows.append(MetricsRow(
                method, sn, op,
                mean([r.precision for r in ok]), mean([r.recall for r in ok]), mean([r.f1 for r in ok]),
                float(sum(r.seconds for r in rs)), len(rs) - len(ok), len(rs),
            ))
        return cls(rows, results)

    def cell(self, method, SN, OP) -> MetricsRow:
        for r in self.rows:
            if r.method == method and r.SN == SN and abs(r.OP - OP) < 1e-12:
                return r
        raise KeyError((method, SN, OP))

    def to_csv(self, timing: bool = True) -> str:
        cols = [c for c in self.COLUMNS if timing or c != "seconds"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            d = asdict(r)
            w.writerow([_fmt(d[c]) for c in cols])
        return buf.getvalue()

    def trials_to_csv(self, timing: bool = True) -> str:
        cols = [c for c in self.TRIAL_COLUMNS if timing or c != "seconds"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.trials:
            d = asdict(r)
            w.writerow(["" if d[c] is None else _fmt(d[c]) for c in cols])
        return buf.getvalue()

    def timing_grid(self, method: str) -> str:
        """Total seconds per cell laid out with SN rows and OP columns."""
        sns = sorted({r.SN for r in self.rows})
        ops = sorted({r.OP for r in self.rows})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time (s)"] + [f"OP={_pct(op)}" for op in ops])
        for sn in sns:
            w.writerow([f"SN={sn}"] + [f"{self.cell(method, sn, op).seconds:.2f}" for op in ops])
        return buf.getvalue()


def _pct(op: float) -> str:
    return f"{op * 100:g}%"


def _run_task(args):
    spec, t = args
    return run_trial(spec, t)


def default_jobs() -> int:
    return int(os.environ.get("ROBUSTRANK_JOBS", "1"))


def _execute(tasks, jobs):
    if jobs is None:
        jobs = default_jobs()
    out = []
    if jobs <= 1:
        for task in tasks:
            out.extend(_run_task(task))
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for rows in pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs))):
            out.extend(rows)
    return out


def run_experiment(spec: ExperimentSpec, jobs: int | None = None) -> MetricsTable:
    """All trials of one (SN, OP) cell."""
    tasks = [(spec, t) for t in range(spec.trials)]
    return MetricsTable.from_trials(_execute(tasks, jobs), spec.methods)


def run_grid(n: int = 16, sn=DEFAULT_SN, op=DEFAULT_OP, trials: int = 100, methods=METHODS,
             seed: int = 0, value_scale: float = 1.0, jobs: int | None = None) -> MetricsTable:
    """Every (SN, OP) cell of a grid; trials of all cells share one worker pool."""
    specs = [ExperimentSpec(n, s, o, trials, seed, tuple(methods), value_scale) for s in sn for o in op]
    tasks = [(spec, t) for spec in specs for t in range(trials)]
    return MetricsTable.from_trials(_execute(tasks, jobs), tuple(methods))
