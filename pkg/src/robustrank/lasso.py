"""Huber-LASSO baseline: ``min 1/2 ||Y - X s - E||^2 + lam ||E||_1``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ComparisonDataset, GradientOperator, LaplacianSolver, ScoreVector, build_operator

__all__ = ["LassoPathPoint", "LassoSelection", "soft_threshold", "huber_lasso", "lambda_max", "lasso_select_k"]


@dataclass
class LassoPathPoint:
    lam: float
    E: np.ndarray
    scores: ScoreVector
    objective: float
    iterations: int = 0
    converged: bool = True

    @property
    def mask(self) -> np.ndarray:
        return (self.E == 0).astype(np.int8)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.E)


@dataclass
class LassoSelection:
    point: LassoPathPoint
    count: int
    exhausted: bool
    entry_lambda: np.ndarray  # lambda at which each record first left zero; nan if never
    grid_points: int

    def path_order(self) -> np.ndarray:
        """Records ordered from most to least outlying (earliest entry first)."""
        key = np.where(np.isnan(self.entry_lambda), -np.inf, self.entry_lambda)
        return np.argsort(-key, kind="stable")


def soft_threshold(v, lam):
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def _objective(r, E, lam):
    d = r - E
    return 0.5 * float(d @ d) + lam * float(np.abs(E).sum())


class _Problem:
    def __init__(self, dataset, op):
        self.op = build_operator(dataset) if op is None else op
        self.Y = dataset.values
        self.solver = LaplacianSolver(self.op)
        self._pinv = self.solver.pinv if self.solver.dense else None

    def scores(self, v):
        b = self.op.apply_adjoint(v)
        return self._pinv @ b if self._pinv is not None else self.solver.solve(b)

    def solve(self, lam, tol, max_iters, E0=None):
        op, Y = self.op, self.Y
        E = np.zeros_like(Y) if E0 is None else E0.copy()
        s = self.scores(Y - E)
        r = Y - op.apply(s)
        E = soft_threshold(r, lam)
        obj = _objective(r, E, lam)
        converged = False
        it = 1
        while it < max_iters:
            it += 1
            s = self.scores(Y - E)
            r = Y - op.apply(s)
            E = soft_threshold(r, lam)
            new = _objective(r, E, lam)
            done = obj - new <= tol * (1.0 + abs(new))
            obj = new
            if done:
                converged = True
                break
        return LassoPathPoint(lam, E, ScoreVector(s, self.solver.labels), obj, it, converged)


def huber_lasso(dataset: ComparisonDataset, lam: float, op: GradientOperator | None = None,
                tol: float = 1e-10, max_iters: int = 10000, E0=None) -> LassoPathPoint:
    """Block coordinate descent: exact LS step in ``s``, soft threshold in ``E``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return _Problem(dataset, op).solve(lam, tol, max_iters, E0)


def lambda_max(dataset: ComparisonDataset, op: GradientOperator | None = None) -> float:
    """Smallest lambda with ``E = 0`` optimal: the largest absolute LS residual."""
    p = _Problem(dataset, op)
    r = p.Y - p.op.apply(p.scores(p.Y))
    return float(np.max(np.abs(r)))


def lasso_select_k(dataset: ComparisonDataset, K: int, op: GradientOperator | None = None,
                   lam_max: float | None = None, decay: float = 0.95, max_points: int = 400,
                   tol: float = 1e-10, max_iters: int = 10000) -> LassoSelection:
    """Walk a geometric lambda grid downward until at least ``K`` records are nonzero.

    The selected count may overshoot ``K`` when several records enter
    between neighbouring grid points.
    """
    N = dataset.n_records
    if not 0 <= K <= N:
        raise ValueError(f"K={K} outside [0, {N}]")
    if not 0 < decay < 1:
        raise ValueError("decay must lie in (0, 1)")
    p = _Problem(dataset, op)
    if lam_max is None:
        r = p.Y - p.op.apply(p.scores(p.Y))
        lam_max = float(np.max(np.abs(r)))
    lam_max = max(lam_max, np.finfo(float).tiny)
    entry = np.full(N, np.nan)
    E = None
    point = None
    for g in range(max_points):
        lam = lam_max * decay**g
        point = p.solve(lam, tol, max_iters, E)
        E = point.E
        fresh = (E != 0) & np.isnan(entry)
        entry[fresh] = lam
        count = int(np.count_nonzero(E))
        if count >= K:
            return LassoSelection(point, count, False, entry, g + 1)
    return LassoSelection(point, int(np.count_nonzero(point.E)), True, entry, max_points)
