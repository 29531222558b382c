"""Scikit-learn style rankers.

Each ranker is fitted on comparisons given either as a
:class:`~robustrank.graph.ComparisonDataset` or as an ``(N, 2)`` array of
item pairs ``X`` with values ``y``. ``predict`` maps item pairs to the
fitted score differences ``s_i - s_j``.

>>> import numpy as np
>>> X = np.array([[0, 1], [0, 1], [0, 1]])
>>> ILTSRanker(n_outliers=1).fit(X, [1, 1, -1]).outlier_mask_
array([False, False,  True])
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_comparisons, check_n_outliers, check_pairs
from .graph import build_operator, least_squares_scores
from .lasso import huber_lasso, lasso_select_k
from .solvers import alts, iht, ilts

__all__ = ["LeastSquaresRanker", "IHTRanker", "ILTSRanker", "ALTSRanker", "HuberLassoRanker"]


class _BaseRanker(RegressorMixin, BaseEstimator):

    def _store(self, dataset, scores, mask):
        self.n_items_ = dataset.n_items
        self.scores_ = np.asarray(scores.scores)
        self.component_labels_ = np.asarray(scores.component_labels)
        self.n_components_ = scores.n_components
        self.ranking_ = scores.ranking()
        self.outlier_mask_ = np.asarray(mask) == 0
        self.n_outliers_ = int(self.outlier_mask_.sum())
        return self

    def predict(self, X):
        check_is_fitted(self, "scores_")
        pairs = check_pairs(X)
        if pairs.max() >= self.n_items_:
            raise ValueError("item index outside the fitted range")
        return self.scores_[pairs[:, 0]] - self.scores_[pairs[:, 1]]

    def fit_predict_outliers(self, X, y=None):
        """Fit, then label each comparison -1 (outlier) or 1 (inlier)."""
        self.fit(X, y)
        return np.where(self.outlier_mask_, -1, 1)


class LeastSquaresRanker(_BaseRanker):
    """Plain least-squares scores on all comparisons."""

    def __init__(self, n_items=None):
        self.n_items = n_items

    def fit(self, X, y=None):
        ds = check_comparisons(X, y, self.n_items)
        return self._store(ds, least_squares_scores(ds), np.ones(ds.n_records))


class IHTRanker(_BaseRanker):
    """Iterative hard thresholding with a known outlier count."""

    def __init__(self, n_outliers=0, epsilon=None, max_iter=1000, n_items=None):
        self.n_outliers = n_outliers
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.n_items = n_items

    def fit(self, X, y=None):
        ds = check_comparisons(X, y, self.n_items)
        K = check_n_outliers(self.n_outliers, ds.n_records)
        out = iht(ds, K, epsilon=self.epsilon, max_iters=self.max_iter)
        self.outliers_ = out.outliers
        self.n_iter_ = out.iterations
        self.converged_ = out.converged
        return self._store(ds, out.scores, out.mask)


class ILTSRanker(_BaseRanker):
    """Iterative least trimmed squares with a known outlier count."""

    def __init__(self, n_outliers=0, max_iter=1000, random_state=0, n_items=None):
        self.n_outliers = n_outliers
        self.max_iter = max_iter
        self.random_state = random_state
        self.n_items = n_items

    def fit(self, X, y=None):
        ds = check_comparisons(X, y, self.n_items)
        K = check_n_outliers(self.n_outliers, ds.n_records, strict=True)
        out = ilts(ds, K, max_iters=self.max_iter, rng_seed=self.random_state)
        self.n_iter_ = out.iterations
        self.converged_ = out.converged
        self.objective_history_ = list(out.objective_history)
        return self._store(ds, out.scores, out.mask)


class ALTSRanker(_BaseRanker):
    """Adaptive LTS: estimates the outlier count from sign disagreements.

    Needs dichotomous (+1/-1) comparisons.
    """

    def __init__(self, beta1=0.75, beta2=1.03, correction=False, random_state=0,
                 max_iter=1000, n_items=None):
        self.beta1 = beta1
        self.beta2 = beta2
        self.correction = correction
        self.random_state = random_state
        self.max_iter = max_iter
        self.n_items = n_items

    def fit(self, X, y=None):
        ds = check_comparisons(X, y, self.n_items)
        out = alts(ds, beta1=self.beta1, beta2=self.beta2, rng_seed=self.random_state,
                   apply_correction=self.correction, max_iters=self.max_iter)
        self.khat_ = out.khat
        self.n_iter_ = out.iterations
        self.converged_ = out.converged
        self.k_tilde_history_ = list(out.k_tilde_history)
        self.k_under_history_ = list(out.k_under_history)
        return self._store(ds, out.scores, out.mask)


class HuberLassoRanker(_BaseRanker):
    """Huber-LASSO baseline.

    With ``alpha`` the penalty is fixed; otherwise ``n_outliers`` selects the
    first point on a decreasing penalty grid with that many nonzeros.
    """

    def __init__(self, alpha=None, n_outliers=None, tol=1e-10, max_iter=10000,
                 decay=0.95, max_points=400, n_items=None):
        self.alpha = alpha
        self.n_outliers = n_outliers
        self.tol = tol
        self.max_iter = max_iter
        self.decay = decay
        self.max_points = max_points
        self.n_items = n_items

    def fit(self, X, y=None):
        ds = check_comparisons(X, y, self.n_items)
        op = build_operator(ds)
        if (self.alpha is None) == (self.n_outliers is None):
            raise ValueError("give exactly one of alpha and n_outliers")
        if self.alpha is not None:
            point = huber_lasso(ds, self.alpha, op=op, tol=self.tol, max_iters=self.max_iter)
            self.path_exhausted_ = False
        else:
            K = check_n_outliers(self.n_outliers, ds.n_records)
            sel = lasso_select_k(ds, K, op=op, decay=self.decay, max_points=self.max_points,
                                 tol=self.tol, max_iters=self.max_iter)
            point = sel.point
            self.path_exhausted_ = sel.exhausted
            self.entry_lambda_ = sel.entry_lambda
        self.alpha_ = point.lam
        self.outliers_ = point.E
        self.objective_ = point.objective
        self.n_iter_ = point.iterations
        self.converged_ = point.converged
        return self._store(ds, point.scores, point.mask)
