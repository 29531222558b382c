"""Nonconvex outlier detection: iterative hard thresholding (iHT), iterative
least trimmed squares (iLTS) and adaptive LTS (aLTS).

All three work on the record order of a :class:`ComparisonDataset`; outlier
vectors and selection masks are positional.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graph import ComparisonDataset, GradientOperator, LaplacianSolver, ScoreVector, build_operator

__all__ = [
    "SolverConfig",
    "SolverOutcome",
    "proj_k",
    "iht",
    "ilts",
    "alts",
    "alts_iteration_bound",
    "lts_objective",
    "certify_coordinatewise_minimum",
    "record_classes",
]

TIE_RTOL = 1e-12
# beyond this many distinct tie resolutions, sample instead of enumerating
_ENUMERATE_TIES_MAX = 4096


@dataclass(frozen=True)
class SolverConfig:
    K: int = 0
    epsilon: float | None = None
    beta1: float = 0.75
    beta2: float = 1.03
    max_iters: int = 1000
    rng_seed: int = 0
    apply_correction: bool = False

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.beta1 < 1 < self.beta2:
            raise ValueError("need 0 < beta1 < 1 < beta2")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


def default_epsilon(Y) -> float:
    """iHT stopping threshold ``1e-8 * ||Y||`` (``1e-12`` for all-zero data)."""
    return 1e-8 * float(np.linalg.norm(Y)) or 1e-12


@dataclass
class SolverOutcome:
    method: str
    scores: ScoreVector
    mask: np.ndarray                     # 1 = kept, 0 = flagged as outlier
    iterations: int
    converged: bool
    outliers: np.ndarray | None = None   # iHT outlier magnitudes E
    khat: int | None = None
    history_digest: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)
    k_tilde_history: list = field(default_factory=list)
    k_under_history: list = field(default_factory=list)
    trim_mask: np.ndarray | None = None  # aLTS: mask of the last LS solve

    @property
    def outlier_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask == 0)

    @property
    def n_outliers(self) -> int:
        return int(np.count_nonzero(self.mask == 0))


def proj_k(v, K: int) -> np.ndarray:
    """Keep the ``K`` entries of largest square, zero the rest.

    Equal squares are resolved in favour of the lower index.
    """
    v = np.asarray(v, float)
    N = len(v)
    if not 0 <= K <= N:
        raise ValueError(f"K={K} outside [0, {N}]")
    out = np.zeros_like(v)
    if K:
        keep = np.argsort(-np.abs(v), kind="stable")[:K]
        out[keep] = v[keep]
    return out


def lts_objective(dataset: ComparisonDataset, op: GradientOperator, s, mask) -> float:
    r = dataset.values - op.apply(np.asarray(s, float))
    return 0.5 * float(np.sum(np.asarray(mask) * r * r))


def record_classes(dataset: ComparisonDataset) -> np.ndarray:
    """Class id per record; records in one class are the same comparison.

    ``(i, j, y)`` and ``(j, i, -y)`` fall in the same class.
    """
    i, j, y = dataset.item_i, dataset.item_j, dataset.values
    flip = i > j
    lo = np.where(flip, j, i)
    hi = np.where(flip, i, j)
    val = np.where(flip, -y, y)
    _, val_id = np.unique(val, return_inverse=True)
    n_vals = int(val_id.max()) + 1
    keys = (lo.astype(np.int64) * dataset.n_items + hi) * n_vals + val_id.ravel()
    _, cls = np.unique(keys, return_inverse=True)
    return cls.ravel()


def _fingerprint(mask) -> bytes:
    return np.flatnonzero(mask == 0).astype(np.int64).tobytes()


def _digest(fp: bytes) -> str:
    return hashlib.sha1(fp).hexdigest()[:16]


def _count_profiles(caps, m):
    # number of ways to split m drops over classes with the given capacities
    ways = [1] + [0] * m
    for c in caps:
        new = [0] * (m + 1)
        for total in range(m + 1):
            if ways[total]:
                for take in range(min(c, m - total) + 1):
                    new[total + take] += ways[total]
        ways = new
    return ways[m]


def _profiles(caps, m):
    if not caps:
        if m == 0:
            yield ()
        return
    head, rest = caps[0], caps[1:]
    room = sum(rest)
    for take in range(max(0, m - room), min(head, m) + 1):
        for tail in _profiles(rest, m - take):
            yield (take,) + tail


def _trim_mask(r2, K, rng, classes, seen=None):
    """Mask keeping the N-K smallest squares.

    A tie between the K-th and (K+1)-th largest squares is resolved at
    random. Only the number dropped from each class of identical records
    matters; inside a class the lowest indices are dropped. With ``seen``,
    the choice avoids masks already visited and ``None`` is returned if
    every resolution has been visited.
    """
    N = len(r2)
    mask = np.ones(N, dtype=np.int8)
    if K == 0:
        return None if seen is not None and _fingerprint(mask) in seen else mask
    if K >= N:
        mask[:] = 0
        return None if seen is not None and _fingerprint(mask) in seen else mask
    order = np.argsort(-r2, kind="stable")
    edge = r2[order[K - 1]]
    tol = TIE_RTOL * max(1.0, abs(edge))
    if abs(r2[order[K]] - edge) > tol:
        mask[order[:K]] = 0
        return None if seen is not None and _fingerprint(mask) in seen else mask

    tied = np.flatnonzero(np.abs(r2 - edge) <= tol)
    forced = np.flatnonzero(r2 > edge + tol)
    m = K - len(forced)
    mask[forced] = 0
    tie_cls = classes[tied]
    ucls = np.unique(tie_cls)
    members = [tied[tie_cls == c] for c in ucls]  # ascending indices
    caps = [len(g) for g in members]

    def build(profile):
        out = mask.copy()
        for g, take in zip(members, profile):
            out[g[:take]] = 0
        return out

    def random_profile():
        pick = rng.permutation(len(tied))[:m]
        return tuple(np.bincount(np.searchsorted(ucls, tie_cls[pick]), minlength=len(ucls)))

    if seen is None:
        return build(random_profile())
    total = _count_profiles(caps, m)
    if total <= _ENUMERATE_TIES_MAX:
        fresh = [p for p in _profiles(caps, m) if _fingerprint(build(p)) not in seen]
        if not fresh:
            return None
        return build(fresh[rng.integers(len(fresh))])
    for _ in range(1000):
        cand = build(random_profile())
        if _fingerprint(cand) not in seen:
            return cand
    return None


def _residual_setup(dataset, op):
    op = build_operator(dataset) if op is None else op
    if op.n_rows != dataset.n_records:
        raise ValueError("operator and dataset disagree on the number of records")
    return op


def _masked_scores(dataset, op, mask):
    solver = LaplacianSolver(op, mask)
    s = solver.solve(op.apply_adjoint(mask * dataset.values))
    return ScoreVector(s, solver.labels)


def iht(dataset: ComparisonDataset, K: int, op: GradientOperator | None = None,
        epsilon: float | None = None, max_iters: int = 1000) -> SolverOutcome:
    """Iterative hard thresholding on the outlier vector ``E``.

    ``E <- Proj_K((I - H) Y + H E)`` with the hat matrix applied matrix-free.
    ``epsilon`` defaults to ``1e-8 * ||Y||``.
    """
    op = _residual_setup(dataset, op)
    Y = dataset.values
    N = len(Y)
    if not 0 <= K <= N:
        raise ValueError(f"K={K} outside [0, {N}]")
    if epsilon is None:
        epsilon = default_epsilon(Y)
    solver = LaplacianSolver(op)
    pinv = solver.pinv if solver.dense else None

    def hat(v):
        b = op.apply_adjoint(v)
        return op.apply(pinv @ b if pinv is not None else solver.solve(b))

    resid_y = Y - hat(Y)
    E = np.zeros(N)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        E_new = proj_k(resid_y + hat(E), K)
        step = float(np.linalg.norm(E_new - E))
        E = E_new
        if step <= epsilon:
            converged = True
            break
    s = solver.solve(op.apply_adjoint(Y - E))
    mask = (E == 0).astype(np.int8)
    return SolverOutcome("iht", ScoreVector(s, solver.labels), mask, it, converged, outliers=E)


def ilts(dataset: ComparisonDataset, K: int, op: GradientOperator | None = None,
         max_iters: int = 1000, rng_seed=0) -> SolverOutcome:
    """Alternate masked least squares with trimming the K largest residuals.

    Stops as soon as the new mask has been visited before (or, on a
    boundary tie, when every tie resolution has been visited).
    """
    op = _residual_setup(dataset, op)
    Y = dataset.values
    N = len(Y)
    if not 0 <= K < N:
        raise ValueError(f"K={K} outside [0, {N})")
    rng = np.random.default_rng(rng_seed)
    classes = record_classes(dataset)
    mask = np.ones(N, dtype=np.int8)
    fp = _fingerprint(mask)
    seen = {fp}
    digests = [_digest(fp)]
    objectives = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        scores = _masked_scores(dataset, op, mask)
        r = Y - op.apply(scores.scores)
        r2 = r * r
        objectives.append(0.5 * float(np.sum(mask * r2)))
        new_mask = _trim_mask(r2, K, rng, classes, seen)
        if new_mask is None:
            converged = True
            break
        fp = _fingerprint(new_mask)
        seen.add(fp)
        digests.append(_digest(fp))
        mask = new_mask
    return SolverOutcome(
        "ilts", scores, mask, it, converged,
        history_digest=digests, objective_history=objectives,
    )


def alts_iteration_bound(beta1: float, beta2: float) -> int:
    """Upper bound on aLTS outer iterations: floor(-log b1 / log b2) + 2."""
    return math.floor(-math.log(beta1) / math.log(beta2)) + 2


def _exact(x) -> Fraction:
    # decimal reading of the parameter, so ceil(1.03 * 100) is 103
    return Fraction(str(x))


def _wrong_direction(Y, fitted):
    # a zero score gap cannot confirm the observed preference
    return (np.sign(Y) != np.sign(fitted)) | (fitted == 0)


def _successive_pair_correction(dataset, scores, mask):
    i, j, Y = dataset.item_i, dataset.item_j, dataset.values
    s = scores.scores
    order = scores.ranking()
    out = mask.copy()
    for a, b in zip(order[:-1], order[1:]):
        if not s[a] > s[b]:
            continue
        fwd = (i == a) & (j == b)
        rev = (i == b) & (j == a)
        pro = (fwd & (Y > 0)) | (rev & (Y < 0))
        con = (fwd & (Y < 0)) | (rev & (Y > 0))
        if pro.sum() < con.sum():
            out[con] = 1
            out[pro] = 0
    return out


def alts(dataset: ComparisonDataset, op: GradientOperator | None = None,
         beta1: float = 0.75, beta2: float = 1.03, rng_seed=0,
         apply_correction: bool = False, max_iters: int = 1000) -> SolverOutcome:
    """Adaptive LTS for dichotomous data with an unknown number of outliers.

    The overestimate is the count of sign-inconsistent comparisons; the
    underestimate starts at ``ceil(beta1 * overestimate)`` and grows by
    ``beta2`` until the two meet. The reported outliers are the ``khat``
    largest squared residuals under the final scores.
    """
    if not dataset.dichotomous:
        raise ValueError("aLTS requires dichotomous data: every value must be +1 or -1")
    if not 0 < beta1 < 1 < beta2:
        raise ValueError("need 0 < beta1 < 1 < beta2")
    op = _residual_setup(dataset, op)
    Y = dataset.values
    N = len(Y)
    b1, b2 = _exact(beta1), _exact(beta2)
    rng = np.random.default_rng(rng_seed)
    classes = record_classes(dataset)
    mask = np.ones(N, dtype=np.int8)
    k_tilde_prev = None
    k_under = 0
    k_tildes, k_unders = [], []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        scores = _masked_scores(dataset, op, mask)
        fitted = op.apply(scores.scores)
        k_tilde = int(np.count_nonzero(_wrong_direction(Y, fitted)))
        if k_tilde_prev is not None:
            k_tilde = min(k_tilde, k_tilde_prev)
        if it == 1:
            k_under = math.ceil(b1 * k_tilde)
        else:
            k_under = min(math.ceil(b2 * k_under), k_tilde)
        k_tildes.append(k_tilde)
        k_unders.append(k_under)
        if k_under == k_tilde:
            converged = True
            break
        r = Y - fitted
        mask = _trim_mask(r * r, k_under, rng, classes)
        k_tilde_prev = k_tilde
    r = Y - fitted
    detected = _trim_mask(r * r, k_tilde, rng, classes)
    if apply_correction:
        detected = _successive_pair_correction(dataset, scores, detected)
    return SolverOutcome(
        "alts", scores, detected, it, converged, khat=k_tilde,
        k_tilde_history=k_tildes, k_under_history=k_unders, trim_mask=mask,
    )


def certify_coordinatewise_minimum(dataset: ComparisonDataset, op: GradientOperator | None,
                                   outcome: SolverOutcome, K: int, tol: float = 1e-8) -> bool:
    """Check that (s, mask) is a coordinatewise minimum of the LTS objective.

    (a) the mask is optimal for fixed scores: it keeps at least N-K records
    and its objective equals the sum of the N-K smallest squared residuals;
    (b) the scores are optimal for the fixed mask: the masked normal
    equations hold.
    """
    op = _residual_setup(dataset, op)
    Y = dataset.values
    N = len(Y)
    mask = np.asarray(outcome.mask)
    s = np.asarray(outcome.scores.scores, float)
    if np.count_nonzero(mask) < N - K or not np.all((mask == 0) | (mask == 1)):
        return False
    r = Y - op.apply(s)
    r2 = r * r
    best = 0.5 * float(np.sum(np.sort(r2)[: N - K]))
    current = 0.5 * float(np.sum(mask * r2))
    if current > best + tol * max(1.0, best):
        return False
    normal = op.apply_adjoint(mask * r)
    return float(np.linalg.norm(normal)) <= tol * max(1.0, float(np.linalg.norm(Y)))
