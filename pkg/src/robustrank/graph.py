"""Comparison graphs, the gradient operator and Laplacian least squares.

A comparison dataset stores N records ``(rater, i, j, value)``. Record ``k``
defines row ``k`` of the gradient operator ``X`` (``e_i - e_j``) and entry
``k`` of the observation vector ``Y``. Everything downstream (masks, outlier
vectors) indexes into this record order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg

__all__ = [
    "ComparisonRecord",
    "ComparisonDataset",
    "GradientOperator",
    "ScoreVector",
    "LaplacianSolver",
    "build_operator",
    "apply_X",
    "apply_Xt",
    "solve_laplacian",
    "least_squares_scores",
    "complete_graph_dataset",
]

DENSE_MAX_ITEMS = 200
CG_ATOL = 1e-10


class ComparisonRecord(NamedTuple):
    rater: object
    item_i: int
    item_j: int
    value: float


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ComparisonDataset:
    """Paired comparisons in a fixed record order.

    ``dichotomous`` is inferred (all values are +1 or -1) unless given; an
    explicit ``True`` is validated.
    """

    n_items: int
    item_i: np.ndarray
    item_j: np.ndarray
    values: np.ndarray
    raters: tuple = ()
    dichotomous: bool | None = None
    labels: tuple = ()

    def __post_init__(self):
        i = _frozen(self.item_i, np.intp)
        j = _frozen(self.item_j, np.intp)
        y = _frozen(self.values, float)
        if not (i.ndim == j.ndim == y.ndim == 1) or not (len(i) == len(j) == len(y)):
            raise ValueError("item_i, item_j and values must be 1-d arrays of equal length")
        if len(y) < 1:
            raise ValueError("a dataset needs at least one comparison")
        n = int(self.n_items)
        if n < 1:
            raise ValueError("n_items must be positive")
        bad = np.flatnonzero((i < 0) | (j < 0) | (i >= n) | (j >= n))
        if bad.size:
            raise ValueError(f"record {bad[0]}: item index out of range for n_items={n}")
        loops = np.flatnonzero(i == j)
        if loops.size:
            raise ValueError(f"record {loops[0]}: item_i == item_j ({i[loops[0]]})")
        if not np.all(np.isfinite(y)):
            raise ValueError("comparison values must be finite")
        is_pm1 = bool(np.all(np.abs(y) == 1.0))
        if self.dichotomous is None:
            dich = is_pm1
        else:
            dich = bool(self.dichotomous)
            if dich and not is_pm1:
                raise ValueError("dichotomous dataset requires every value in {+1, -1}")
        raters = tuple(self.raters) if len(self.raters) else tuple(range(len(y)))
        if len(raters) != len(y):
            raise ValueError("raters must have one entry per record")
        labels = tuple(self.labels) if len(self.labels) else tuple(range(n))
        if len(labels) != n:
            raise ValueError("labels must have one entry per item")
        object.__setattr__(self, "n_items", n)
        object.__setattr__(self, "item_i", i)
        object.__setattr__(self, "item_j", j)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "raters", raters)
        object.__setattr__(self, "dichotomous", dich)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_records(cls, records: Iterable, n_items: int | None = None, **kwargs):
        recs = [ComparisonRecord(*r) for r in records]
        i = [r.item_i for r in recs]
        j = [r.item_j for r in recs]
        if n_items is None:
            n_items = max(max(i), max(j)) + 1 if recs else 0
        return cls(n_items, i, j, [r.value for r in recs], raters=tuple(r.rater for r in recs), **kwargs)

    @property
    def n_records(self) -> int:
        return len(self.values)

    @property
    def records(self) -> list[ComparisonRecord]:
        return [
            ComparisonRecord(r, int(a), int(b), float(v))
            for r, a, b, v in zip(self.raters, self.item_i, self.item_j, self.values)
        ]

    @property
    def has_ties(self) -> bool:
        """True when some comparison has value 0 (no stated preference)."""
        return bool(np.any(self.values == 0))

    def with_values(self, values) -> "ComparisonDataset":
        return ComparisonDataset(
            self.n_items, self.item_i, self.item_j, values, raters=self.raters, labels=self.labels
        )

    def permute_items(self, perm) -> "ComparisonDataset":
        """Relabel item ``a`` as ``perm[a]``; record order is unchanged."""
        perm = np.asarray(perm)
        labels = [None] * self.n_items
        for a, p in enumerate(perm):
            labels[p] = self.labels[a]
        return ComparisonDataset(
            self.n_items, perm[self.item_i], perm[self.item_j], self.values,
            raters=self.raters, labels=tuple(labels),
        )


@dataclass(frozen=True, eq=False)
class GradientOperator:
    """Matrix-free incidence operator; row ``k`` is ``e_{i_k} - e_{j_k}``."""

    n_items: int
    head: np.ndarray
    tail: np.ndarray
    _matrix: object = field(default=None, repr=False, compare=False)

    @property
    def n_rows(self) -> int:
        return len(self.head)

    @property
    def row_endpoints(self) -> list[tuple[int, int]]:
        return list(zip(self.head.tolist(), self.tail.tolist()))

    @property
    def matrix(self) -> sparse.csr_matrix:
        if self._matrix is None:
            N = self.n_rows
            rows = np.repeat(np.arange(N), 2)
            cols = np.column_stack([self.head, self.tail]).ravel()
            data = np.tile([1.0, -1.0], N)
            mat = sparse.csr_matrix((data, (rows, cols)), shape=(N, self.n_items))
            object.__setattr__(self, "_matrix", mat)
        return self._matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def apply(self, s):
        return s[self.head] - s[self.tail]

    def apply_adjoint(self, v):
        n = self.n_items
        return np.bincount(self.head, v, n) - np.bincount(self.tail, v, n)

    def laplacian(self, weights=None) -> np.ndarray:
        """Dense ``X^T diag(weights) X``."""
        n = self.n_items
        w = np.ones(self.n_rows) if weights is None else np.asarray(weights, float)
        off = np.bincount(self.head * n + self.tail, w, n * n) + np.bincount(
            self.tail * n + self.head, w, n * n
        )
        L = -off.reshape(n, n)
        L[np.diag_indices(n)] = np.bincount(self.head, w, n) + np.bincount(self.tail, w, n)
        return L

    def sparse_laplacian(self, weights=None) -> sparse.csr_matrix:
        X = self.matrix
        if weights is not None:
            X = sparse.diags(np.asarray(weights, float)) @ X
        return (self.matrix.T @ X).tocsr()

    def components(self, weights=None) -> np.ndarray:
        """Connected-component label of each item, using rows with nonzero weight."""
        keep = slice(None) if weights is None else np.asarray(weights) != 0
        h, t = self.head[keep], self.tail[keep]
        n = self.n_items
        adj = sparse.coo_matrix((np.ones(len(h)), (h, t)), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        return _canonical_labels(labels)


def _dense_components(L) -> np.ndarray:
    # reachability by repeated squaring; label = smallest reachable item
    R = (L != 0)
    np.fill_diagonal(R, True)
    while True:
        Ri = R.astype(np.float64)
        nxt = (Ri @ Ri) > 0
        if np.array_equal(nxt, R):
            break
        R = nxt
    labels = np.argmax(R, axis=1)
    return _canonical_labels(labels)


def _canonical_labels(labels):
    # renumber so components appear in order of their smallest item
    uniq, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.intp)
    rank[np.argsort(first)] = np.arange(len(uniq))
    return rank[inv.ravel()]


@dataclass(frozen=True, eq=False)
class ScoreVector:
    scores: np.ndarray
    component_labels: np.ndarray

    @property
    def n_components(self) -> int:
        return int(self.component_labels.max()) + 1 if len(self.component_labels) else 0

    @property
    def components(self) -> list[list[int]]:
        return [np.flatnonzero(self.component_labels == c).tolist() for c in range(self.n_components)]

    def ranking(self) -> np.ndarray:
        """Items by descending score; equal scores keep index order."""
        return np.argsort(-self.scores, kind="stable")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.scores, dtype=dtype)

    def __len__(self):
        return len(self.scores)


def build_operator(dataset: ComparisonDataset) -> GradientOperator:
    i, j = dataset.item_i, dataset.item_j
    n = dataset.n_items
    if np.any((i < 0) | (i >= n) | (j < 0) | (j >= n)):
        raise ValueError("item index out of range")
    if np.any(i == j):
        raise ValueError("comparison of an item with itself")
    return GradientOperator(n, i, j)


def apply_X(op: GradientOperator, s) -> np.ndarray:
    s = np.asarray(s, float)
    if s.shape != (op.n_items,):
        raise ValueError(f"expected a score vector of length {op.n_items}, got shape {s.shape}")
    return op.apply(s)


def apply_Xt(op: GradientOperator, v) -> np.ndarray:
    v = np.asarray(v, float)
    if v.shape != (op.n_rows,):
        raise ValueError(f"expected a vector of length {op.n_rows}, got shape {v.shape}")
    return op.apply_adjoint(v)


def _component_means(labels, b, n_comp):
    counts = np.bincount(labels, minlength=n_comp)
    return np.bincount(labels, b, n_comp) / counts


class LaplacianSolver:
    """Pseudoinverse of a (weighted) comparison-graph Laplacian.

    Small graphs use a dense eigendecomposition, larger ones conjugate
    gradients on the per-component zero-mean subspace.
    """

    def __init__(self, op: GradientOperator, weights=None, dense_max=DENSE_MAX_ITEMS):
        self.op = op
        n = op.n_items
        self.dense = n <= dense_max
        if self.dense:
            L = op.laplacian(weights)
            self.labels = _dense_components(L)
        else:
            self.labels = op.components(weights)
        self.n_components = int(self.labels.max()) + 1
        if self.dense:
            evals, evecs = np.linalg.eigh(L)
            # null space has dimension n_components; eigh sorts ascending
            nz = self.n_components
            V = evecs[:, nz:]
            self.pinv = (V / evals[nz:]) @ V.T
        else:
            self.L = op.sparse_laplacian(weights)
            self.maxiter = 10 * n

    def _project(self, b):
        means = _component_means(self.labels, b, self.n_components)
        return b - means[self.labels], means

    def solve(self, b, return_info=False):
        b = np.asarray(b, float)
        pb, means = self._project(b)
        scale = max(1.0, float(np.max(np.abs(b)))) if len(b) else 1.0
        projected = bool(np.any(np.abs(means) > 1e-12 * scale))
        if self.dense:
            x = self.pinv @ pb
            cg_info = 0
        else:
            x, cg_info = cg(self.L, pb, rtol=0.0, atol=CG_ATOL, maxiter=self.maxiter)
        x, _ = self._project(x)
        if return_info:
            return x, {"mean_removed": projected, "cg_info": cg_info}
        return x


def solve_laplacian(op: GradientOperator, b, weights=None, return_info=False):
    """Return ``L^+ b``; with ``return_info`` also report whether ``b`` had a
    per-component mean that was projected away."""
    b = np.asarray(b, float)
    if b.shape != (op.n_items,):
        raise ValueError(f"expected a vector of length {op.n_items}, got shape {b.shape}")
    return LaplacianSolver(op, weights).solve(b, return_info=return_info)


def least_squares_scores(dataset: ComparisonDataset, op: GradientOperator | None = None, mask=None) -> ScoreVector:
    """Minimum-norm solution of ``min ||diag(mask)(Y - X s)||``.

    Components are those of the masked graph; scores sum to zero within each.
    """
    op = build_operator(dataset) if op is None else op
    w = None
    if mask is not None:
        w = np.asarray(mask, float)
        if w.shape != (op.n_rows,):
            raise ValueError(f"mask must have length {op.n_rows}")
    solver = LaplacianSolver(op, w)
    y = dataset.values if w is None else w * dataset.values
    s = solver.solve(op.apply_adjoint(y))
    return ScoreVector(s, solver.labels)


def complete_graph_dataset(n: int, s_star: Sequence[float] | None = None, repeats: int = 1) -> ComparisonDataset:
    """Every unordered pair ``i < j`` compared ``repeats`` times.

    Values are ``s_star[i] - s_star[j]`` (zero when no scores are given).
    """
    i, j = np.triu_indices(n, k=1)
    i, j = np.tile(i, repeats), np.tile(j, repeats)
    s = np.zeros(n) if s_star is None else np.asarray(s_star, float)
    return ComparisonDataset(n, i, j, s[i] - s[j], dichotomous=False)
