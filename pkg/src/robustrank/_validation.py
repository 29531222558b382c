import numbers

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d

from .graph import ComparisonDataset


def check_comparisons(X, y=None, n_items=None) -> ComparisonDataset:
    """Coerce estimator input to a :class:`ComparisonDataset`.

    ``X`` is either a dataset (``y`` must be None) or an ``(N, 2)`` array of
    item index pairs with ``y`` the comparison values.
    """
    if isinstance(X, ComparisonDataset):
        if y is not None:
            raise ValueError("y must be None when X is a ComparisonDataset")
        if n_items is not None and n_items != X.n_items:
            raise ValueError(f"n_items={n_items} but dataset has {X.n_items} items")
        return X
    if y is None:
        raise ValueError("y is required when X is an array of item pairs")
    pairs = check_pairs(X)
    y = column_or_1d(np.asarray(y, dtype=float), warn=True)
    if len(y) != len(pairs):
        raise ValueError(f"X has {len(pairs)} rows but y has {len(y)} entries")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    if n_items is None:
        n_items = int(pairs.max()) + 1
    return ComparisonDataset(n_items, pairs[:, 0], pairs[:, 1], y)


def check_pairs(X) -> np.ndarray:
    X = check_array(X, dtype=None, ensure_2d=True)
    if X.shape[1] != 2:
        raise ValueError(f"expected item pairs of shape (N, 2), got {X.shape}")
    if not np.all(np.equal(np.mod(X, 1), 0)):
        raise ValueError("item indices must be integers")
    X = X.astype(np.intp)
    if X.min() < 0:
        raise ValueError("item indices must be nonnegative")
    return X


def check_n_outliers(K, N, strict=False):
    if not isinstance(K, numbers.Integral) or K < 0:
        raise ValueError(f"n_outliers must be a nonnegative integer, got {K!r}")
    if K > N or (strict and K == N):
        raise ValueError(f"n_outliers={K} too large for {N} comparisons")
    return int(K)
