"""Comparison CSV ingestion and report/matrix emission.

Comparison files are UTF-8 CSV with the exact header
``rater,item_i,item_j,value``. Item labels are mapped to dense indices in
order of first appearance (``item_i`` before ``item_j`` within a row).
Emitted files use LF line endings.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .graph import ComparisonDataset, ScoreVector, least_squares_scores

__all__ = [
    "HEADER",
    "ComparisonFileError",
    "read_comparisons",
    "write_comparisons",
    "format_value",
    "build_report",
    "write_report",
    "preference_matrix",
    "write_matrix",
]

HEADER = ["rater", "item_i", "item_j", "value"]


class ComparisonFileError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = path, line


def read_comparisons(path) -> ComparisonDataset:
    path = Path(path)
    index: dict[str, int] = {}
    raters, heads, tails, values = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADER:
            raise ComparisonFileError(path, 1, f"header must be {','.join(HEADER)!r}, got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise ComparisonFileError(path, line, f"expected 4 fields, got {len(row)}")
            rater, a, b, v = row
            if a == b:
                raise ComparisonFileError(path, line, f"item compared with itself ({a!r})")
            try:
                value = float(v)
            except ValueError:
                raise ComparisonFileError(path, line, f"non-numeric value {v!r}") from None
            if not math.isfinite(value):
                raise ComparisonFileError(path, line, f"non-finite value {v!r}")
            for label in (a, b):
                index.setdefault(label, len(index))
            raters.append(rater)
            heads.append(index[a])
            tails.append(index[b])
            values.append(value)
    if not values:
        raise ComparisonFileError(path, 2, "no comparison rows")
    return ComparisonDataset(len(index), heads, tails, values, raters=tuple(raters), labels=tuple(index))


def format_value(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def write_comparisons(dataset: ComparisonDataset, path) -> None:
    labels = dataset.labels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r, a, b, v in zip(dataset.raters, dataset.item_i, dataset.item_j, dataset.values):
            w.writerow([r, labels[a], labels[b], format_value(v)])


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else None


def build_report(dataset: ComparisonDataset, scores: ScoreVector, method: str, params: dict,
                 outlier_indices=(), khat=None, iterations=None, converged=True) -> dict:
    labels = dataset.labels
    report = {
        "method": method,
        "params": params,
        "items": {str(labels[a]): _json_float(s) for a, s in enumerate(scores.scores)},
        "components": [[str(labels[a]) for a in comp] for comp in scores.components],
        "outliers": [
            {
                "row_index": int(k),
                "rater": str(dataset.raters[k]),
                "item_i": str(labels[dataset.item_i[k]]),
                "item_j": str(labels[dataset.item_j[k]]),
                "value": _json_float(dataset.values[k]),
            }
            for k in sorted(int(k) for k in outlier_indices)
        ],
        "iterations": iterations,
        "converged": bool(converged),
    }
    if method == "alts":
        report["khat"] = None if khat is None else int(khat)
    return report


def write_report(report: dict, path) -> None:
    text = json.dumps(report, indent=2, ensure_ascii=False) + "\n"
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def preference_matrix(dataset: ComparisonDataset, scores: ScoreVector | None = None):
    """Counts ``a[i, j]`` of records preferring i over j, items by descending score.

    Returns ``(order, matrix)``; ``matrix[p, q]`` refers to items
    ``order[p]`` and ``order[q]``.
    """
    if scores is None:
        scores = least_squares_scores(dataset)
    n = dataset.n_items
    i, j, y = dataset.item_i, dataset.item_j, dataset.values
    win = np.where(y > 0, i, j)[y != 0]
    lose = np.where(y > 0, j, i)[y != 0]
    counts = np.bincount(win * n + lose, minlength=n * n).reshape(n, n)
    order = scores.ranking()
    return order, counts[np.ix_(order, order)]


def write_matrix(dataset: ComparisonDataset, path, scores: ScoreVector | None = None) -> None:
    order, mat = preference_matrix(dataset, scores)
    names = [str(dataset.labels[a]) for a in order]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + names)
        for name, row in zip(names, mat):
            w.writerow([name] + [int(c) for c in row])
