"""Exact recovery-condition constants by subset enumeration.

Only small instances are feasible. Work beyond the enumeration budget is
refused with :class:`BudgetExceeded`; an approximate supremum could
undershoot and falsely certify recovery.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import ComparisonDataset, GradientOperator, LaplacianSolver, build_operator

__all__ = [
    "BudgetExceeded",
    "ConditionReport",
    "DEFAULT_BUDGET",
    "hat_matrix",
    "compute_theta",
    "compute_thm4_constants",
    "condition_report",
    "prop1_equivalence_oracle",
]

DEFAULT_BUDGET = 10**7
PHI_CEILING = math.sqrt(2.0) - 1.0
_CHUNK = 1 << 15
_NULL_RTOL = 1e-9
_ZERO_TOL = 1e-10


class BudgetExceeded(RuntimeError):
    """Raised instead of approximating a supremum that is too costly to enumerate."""


@dataclass
class ConditionReport:
    K: int
    theta: float | None = None
    mu: float | None = None
    eta: float | None = None
    epsilon: float | None = None
    phi: float | None = None
    feasible_theorem2: bool | None = None
    feasible_theorem4: bool | None = None
    enumeration_counts: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "theta": self.theta,
            "mu": self.mu,
            "eta": self.eta,
            "epsilon": self.epsilon,
            "phi": self.phi,
            "phi_bound": None if self.epsilon is None else PHI_CEILING - self.epsilon,
            "feasible_theorem2": self.feasible_theorem2,
            "feasible_theorem4": self.feasible_theorem4,
            "enumeration_counts": dict(self.enumeration_counts),
            "flags": list(self.flags),
        }


def _check_budget(count, budget, what):
    if count > budget:
        raise BudgetExceeded(f"{what} needs {count} subsets, budget is {budget}")


def _pinv_psd(A):
    evals, evecs = np.linalg.eigh(A)
    cut = _NULL_RTOL * max(1.0, float(np.max(np.abs(evals))))
    keep = evals > cut
    V = evecs[:, keep]
    return (V / evals[keep]) @ V.T


def hat_matrix(op: GradientOperator) -> np.ndarray:
    """Dense ``H = X L^+ X^T``."""
    X = op.dense()
    pinv = LaplacianSolver(op, dense_max=max(op.n_items, 1)).pinv
    return X @ pinv @ X.T


def _combo_chunks(N, m):
    it = itertools.combinations(range(N), m)
    dtype = np.dtype((np.intp, m))
    while True:
        block = np.fromiter(itertools.islice(it, _CHUNK), dtype=dtype)
        if len(block) == 0:
            return
        yield block.reshape(-1, m)


def _max_principal_norm(M, m):
    """Largest spectral norm of an ``m x m`` principal submatrix of PSD ``M``."""
    N = M.shape[0]
    if m == 0 or N == 0:
        return 0.0
    best = 0.0
    for idx in _combo_chunks(N, m):
        sub = M[idx[:, :, None], idx[:, None, :]]
        best = max(best, float(np.linalg.eigvalsh(sub)[:, -1].max()))
    return best


def compute_theta(op: GradientOperator, K: int, budget: int = DEFAULT_BUDGET,
                  all_sizes: bool = False, report: ConditionReport | None = None) -> float:
    """Sup of ``||H_{J,J}||_2`` over row sets ``|J| <= 3K``.

    Principal-submatrix norms of a PSD matrix grow with the index set, so
    only ``|J| = min(3K, N)`` is enumerated unless ``all_sizes`` is set.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    N = op.n_rows
    m = min(3 * K, N)
    sizes = range(1, m + 1) if all_sizes else ([m] if m else [])
    count = sum(math.comb(N, k) for k in sizes)
    _check_budget(count, budget, "theta")
    if report is not None:
        report.enumeration_counts["theta"] = count
    if not sizes:
        return 0.0
    H = hat_matrix(op)
    return max(_max_principal_norm(H, k) for k in sizes)


def _thm4_slice(X, L, c, twoK):
    """Sup of mu, eta, phi over row sets J whose complement has size c."""
    N, n = X.shape
    mu = eta = phi = 0.0
    count = 0
    for comp in itertools.combinations(range(N), c):
        comp = list(comp)
        Xc = X[comp]
        LJ = L - Xc.T @ Xc
        P = _pinv_psd(LJ)
        if c:
            A = Xc @ P @ Xc.T
            mu = max(mu, math.sqrt(max(0.0, float(np.linalg.eigvalsh(A)[-1]))))
            null_proj = np.eye(n) - P @ LJ
            e = float(np.linalg.norm(Xc @ null_proj, 2))
            # rows of X have norm sqrt(2); anything this small is rounding
            eta = max(eta, e if e > _ZERO_TOL else 0.0)
        if twoK:
            M = X @ P @ X.T
            phi = max(phi, _max_principal_norm(M, twoK))
        count += 1 + (math.comb(N, twoK) if twoK else 0)
    return mu, eta, phi, count


def compute_thm4_constants(op: GradientOperator, K: int, s_star=None, E_star=None, N_star=None,
                           budget: int = DEFAULT_BUDGET, report: ConditionReport | None = None,
                           exhaustive_max_rows: int = 12) -> ConditionReport:
    """mu, eta, phi by enumeration over kept sets ``|J| >= N - K``; epsilon from ground truth.

    ``|J| = N - K`` is the primary slice. When ``N <= exhaustive_max_rows``
    every larger J is enumerated too, and a ``slice_discrepancy`` flag is set
    if a larger J attains a bigger value.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    report = ConditionReport(K) if report is None else report
    N = op.n_rows
    c_max = min(K, N)
    twoK = min(2 * K, N)
    sizes = range(0, c_max + 1) if N <= exhaustive_max_rows else [c_max]
    per_J = 1 + (math.comb(N, twoK) if twoK else 0)
    count = sum(math.comb(N, c) for c in sizes) * per_J
    _check_budget(count, budget, "mu, eta and phi")
    X = op.dense()
    L = X.T @ X
    slices = {c: _thm4_slice(X, L, c, twoK) for c in sizes}
    mu, eta, phi, _ = slices[c_max]
    for c, (m_, e_, p_, _) in slices.items():
        if c != c_max and (m_ > mu + 1e-12 or e_ > eta + 1e-12 or p_ > phi + 1e-12):
            if "slice_discrepancy" not in report.flags:
                report.flags.append("slice_discrepancy")
        mu, eta, phi = max(mu, m_), max(eta, e_), max(phi, p_)
    report.mu, report.eta, report.phi = mu, eta, phi
    report.enumeration_counts["mu_eta_phi"] = count

    if E_star is not None:
        E_star = np.asarray(E_star, float)
        nz = np.abs(E_star[E_star != 0])
        noise = 0.0 if N_star is None else float(np.linalg.norm(N_star))
        s_norm = 0.0 if s_star is None else float(np.linalg.norm(s_star))
        if nz.size == 0:
            report.epsilon = 0.0
            report.flags.append("no_outliers")
        else:
            report.epsilon = math.sqrt(2.0) * ((2 + mu) * noise + eta * s_norm) / float(nz.min())
    elif eta == 0.0:
        # noiseless instances with eta = 0 have epsilon = 0 whatever s*
        report.epsilon = 0.0
        report.flags.append("epsilon_assumes_noiseless")
    if report.epsilon is not None:
        report.feasible_theorem4 = bool(phi < PHI_CEILING - report.epsilon)
    return report


def condition_report(op: GradientOperator, K: int, s_star=None, E_star=None, N_star=None,
                     budget: int = DEFAULT_BUDGET) -> ConditionReport:
    """theta, mu, eta, epsilon and phi for one operator and K, with both feasibility checks."""
    report = ConditionReport(K)
    report.theta = compute_theta(op, K, budget=budget, report=report)
    bound = 0.5
    if E_star is not None and N_star is not None:
        nz = np.abs(np.asarray(E_star, float))
        nz = nz[nz != 0]
        if nz.size:
            bound = 0.5 - float(np.linalg.norm(N_star)) / float(nz.min())
    report.feasible_theorem2 = bool(report.theta < bound)
    compute_thm4_constants(op, K, s_star, E_star, N_star, budget=budget, report=report)
    return report


def _masked_fit(op, Y, keep):
    solver = LaplacianSolver(op, keep.astype(float))
    s = solver.solve(op.apply_adjoint(keep * Y))
    r = Y - op.apply(s)
    return s, solver.labels, 0.5 * float(np.sum(keep * r * r)), r


def _affine_pieces(op, Y, supports):
    """Objective and (centered scores, partition) for each dropped-row set."""
    out = []
    N = len(Y)
    for S in supports:
        keep = np.ones(N)
        keep[list(S)] = 0
        s, labels, obj, r = _masked_fit(op, Y, keep)
        out.append((obj, s, labels, S, r))
    return out


def _contained(a, b, tol):
    # affine set a (s + per-component constants of partition a) inside set b?
    s_a, lab_a = a
    s_b, lab_b = b
    # a's free directions (its block indicators) must be sums of b's,
    # i.e. every block of b lies inside one block of a
    for c in np.unique(lab_b):
        if len(np.unique(lab_a[lab_b == c])) != 1:
            return False
    d = s_a - s_b
    for c in np.unique(lab_b):
        blk = d[lab_b == c]
        if np.ptp(blk) > tol:
            return False
    return True


def _same_solution_sets(A, B, tol):
    return all(any(_contained(a, b, tol) for b in B) for a in A) and all(
        any(_contained(b, a, tol) for a in A) for b in B
    )


def _optimal(pieces, tol):
    best = min(p[0] for p in pieces)
    cut = best + tol * max(1.0, best)
    return best, [p for p in pieces if p[0] <= cut]


def prop1_equivalence_oracle(dataset: ComparisonDataset, K: int, op: GradientOperator | None = None,
                             lam: float | None = None, budget: int = DEFAULT_BUDGET,
                             tol: float = 1e-8, return_details: bool = False):
    """Brute-force check that the l0-constrained and LTS problems share optimal scores.

    The constrained problem is enumerated over supports ``|supp E| <= K``
    (E equals the residual on its support), LTS over masks dropping exactly
    K records. Optimal score sets are unions of affine pieces (scores are
    free up to a constant per component of the kept graph) and are compared
    by mutual containment. With ``lam``, the penalized problem is solved
    too, K is taken from its optimum and all three sets are compared.
    """
    op = build_operator(dataset) if op is None else op
    Y = dataset.values
    N = len(Y)
    if lam is not None:
        count = 2**N
        _check_budget(count, budget, "penalized l0 problem")
        pieces = _affine_pieces(op, Y, (S for k in range(N + 1) for S in itertools.combinations(range(N), k)))
        nnz = lambda p: int(np.count_nonzero(np.abs(p[4][list(p[3])]) > tol)) if p[3] else 0
        pen = [(p[0] + lam * nnz(p),) + p[1:] for p in pieces]
        best_pen, opt_pen = _optimal(pen, tol)
        K = nnz(opt_pen[0])
        S1 = [(p[1], p[2]) for p in opt_pen if nnz(p) == K]
    if not 0 <= K <= N:
        raise ValueError(f"K={K} outside [0, {N}]")
    count = sum(math.comb(N, k) for k in range(K + 1))
    _check_budget(count, budget, "equivalence oracle")
    constrained = _affine_pieces(op, Y, (S for k in range(K + 1) for S in itertools.combinations(range(N), k)))
    best2, opt2 = _optimal(constrained, tol)
    lts = [p for p in constrained if len(p[3]) == K]
    best3, opt3 = _optimal(lts, tol)
    S2 = [(p[1], p[2]) for p in opt2]
    S3 = [(p[1], p[2]) for p in opt3]
    ok = abs(best2 - best3) <= tol * max(1.0, best2) and _same_solution_sets(S2, S3, tol)
    if lam is not None:
        ok = ok and _same_solution_sets(S1, S2, tol)
    if return_details:
        return ok, {
            "K": K,
            "constrained_optimum": best2,
            "lts_optimum": best3,
            "optimal_supports": [tuple(p[3]) for p in opt3],
            "optimal_scores": [p[1] for p in opt3],
        }
    return ok
