"""Constrained least squares: min ||A theta - y||^2 over a polyhedron.

Constraint sets combine equality anchors (theta_i = value), nonnegativity on
selected coefficients, and a monotonicity chain kappa*theta_k <= kappa*theta_{k+1}.
Problems here are tiny (a few dozen variables), so a primal active-set method
on the normal equations, with anchors substituted out, gives exact vertex
solutions; Bland's rule on constraint indices makes degenerate ties
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConstraintSet",
    "QpSolution",
    "solve_cls",
    "solve_cls_gram",
    "build_constraints_for_drift",
    "build_constraints_for_diffusion",
]

CONSTRAINT_TOL = 1e-10
KKT_TOL = 1e-8


@dataclass(frozen=True)
class ConstraintSet:
    """Anchors, sign restrictions, and a monotonicity chain on n coefficients.

    ``sign`` marks the coefficients constrained to be nonnegative.
    ``monotonicity`` is +1 for a non-decreasing chain, -1 for non-increasing,
    0 for none.
    """

    n: int
    anchors: tuple = ()
    sign: tuple = ()
    monotonicity: int = 0

    def __post_init__(self):
        idx = [i for i, _ in self.anchors]
        if len(set(idx)) != len(idx):
            raise ValueError("anchor indices must be distinct")
        if any(i < 0 or i >= self.n for i in idx):
            raise ValueError("anchor index out of range")
        if any(i < 0 or i >= self.n for i in self.sign):
            raise ValueError("sign index out of range")
        if self.monotonicity not in (-1, 0, 1):
            raise ValueError("monotonicity must be -1, 0 or +1")

    def inequality_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """All inequalities as C theta <= b.

        Rows are ordered monotonicity chain first, then sign constraints, so
        constraint indices are stable for Bland's rule.
        """
        rows, rhs = [], []
        k = self.monotonicity
        if k != 0:
            for i in range(self.n - 1):
                row = np.zeros(self.n)
                row[i], row[i + 1] = k, -k
                rows.append(row)
                rhs.append(0.0)
        for i in sorted(self.sign):
            row = np.zeros(self.n)
            row[i] = -1.0
            rows.append(row)
            rhs.append(0.0)
        if not rows:
            return np.zeros((0, self.n)), np.zeros(0)
        return np.array(rows), np.array(rhs)


@dataclass
class QpSolution:
    theta: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    status: str  # optimal | max_iter | infeasible
    regularized: bool = False
    certificate: dict = field(default_factory=dict)


def build_constraints_for_drift(n_basis: int, rho_bar: float | None, kappa: int) -> ConstraintSet:
    """Admissible set for drift coefficients: first node anchored, chain per kappa."""
    anchors = () if rho_bar is None else ((0, float(rho_bar)),)
    return ConstraintSet(n=n_basis, anchors=anchors, sign=(), monotonicity=kappa)


def build_constraints_for_diffusion(n_basis: int, anchors, kappa: int) -> ConstraintSet:
    """Admissible set for diffusion coefficients: all nonnegative, plus anchors/chain.

    ``anchors`` is a sequence of (index, value) pairs in coefficient space;
    negative indices count from the end.
    """
    fixed = tuple((i % n_basis, float(v)) for i, v in anchors)
    return ConstraintSet(
        n=n_basis, anchors=fixed, sign=tuple(range(n_basis)), monotonicity=kappa
    )


def _feasible_start(constraints: ConstraintSet) -> tuple[np.ndarray | None, dict]:
    """Construct a feasible point, or return an infeasibility certificate.

    Bounds implied by anchors and sign constraints are propagated along the
    monotone chain; a crossing (lower > upper) pins down the conflict.
    """
    n = constraints.n
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for i in constraints.sign:
        lo[i] = 0.0
    for i, v in constraints.anchors:
        if v < lo[i] - CONSTRAINT_TOL:
            return None, {"kind": "anchor_vs_sign", "index": i, "value": v}
        lo[i] = hi[i] = v
    k = constraints.monotonicity
    if k == +1:  # non-decreasing
        for i in range(1, n):
            lo[i] = max(lo[i], lo[i - 1])
        for i in range(n - 2, -1, -1):
            hi[i] = min(hi[i], hi[i + 1])
    elif k == -1:  # non-increasing
        for i in range(n - 2, -1, -1):
            lo[i] = max(lo[i], lo[i + 1])
        for i in range(1, n):
            hi[i] = min(hi[i], hi[i - 1])
    bad = np.nonzero(lo > hi + CONSTRAINT_TOL)[0]
    if bad.size:
        j = int(bad[0])
        return None, {"kind": "bound_crossing", "index": j, "lower": lo[j], "upper": hi[j]}
    theta = np.minimum(np.maximum(lo, 0.0), hi)
    theta[~np.isfinite(theta)] = 0.0
    return theta, {}


def _solve_kkt(G, C_active, rhs, n_free, reg_scale):
    """Solve the equality-constrained KKT system, regularizing G if singular."""
    m = C_active.shape[0]
    kkt = np.zeros((n_free + m, n_free + m))
    kkt[:n_free, :n_free] = G
    kkt[:n_free, n_free:] = C_active.T
    kkt[n_free:, :n_free] = C_active
    full_rhs = np.concatenate([rhs, np.zeros(m)])
    try:
        sol = np.linalg.solve(kkt, full_rhs)
        if np.all(np.isfinite(sol)):
            return sol[:n_free], sol[n_free:], False
    except np.linalg.LinAlgError:
        pass
    kkt[:n_free, :n_free] = G + reg_scale * np.eye(n_free)
    sol = np.linalg.lstsq(kkt, full_rhs, rcond=None)[0]
    return sol[:n_free], sol[n_free:], True


def solve_cls_gram(
    G,
    c,
    constraints: ConstraintSet | None,
    *,
    y_norm2: float = 0.0,
    constraint_tol: float = CONSTRAINT_TOL,
    kkt_tol: float = KKT_TOL,
    max_iter: int | None = None,
) -> QpSolution:
    """Minimize theta'G theta - 2 c'theta + y_norm2 subject to the constraints.

    With ``G = A'A``, ``c = A'y`` and ``y_norm2 = ||y||^2`` this is the
    least-squares problem in normal-equation form; pipelines accumulate Gram
    pairs per snapshot block so the full design matrix never needs stacking.
    """
    G = np.asarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.size
    if G.shape != (n, n):
        raise ValueError("Gram matrix shape does not match the target vector")
    if constraints is None:
        constraints = ConstraintSet(n=n)
    if constraints.n != n:
        raise ValueError("constraint set size does not match the problem")

    theta0, certificate = _feasible_start(constraints)
    if theta0 is None:
        return QpSolution(
            theta=np.full(n, np.nan),
            objective=np.inf,
            kkt_residual=np.inf,
            iterations=0,
            status="infeasible",
            certificate=certificate,
        )

    anchored = np.zeros(n, dtype=bool)
    anchor_vals = np.zeros(n)
    for i, v in constraints.anchors:
        anchored[i] = True
        anchor_vals[i] = v
    free = np.nonzero(~anchored)[0]
    C_all, b_all = constraints.inequality_rows()

    theta = theta0.copy()
    if free.size == 0:
        return _finish(G, c, y_norm2, theta, C_all, b_all, np.zeros(0, dtype=int),
                       free, 0, "optimal", False, constraint_tol)

    # Reduced problem in the free coordinates.
    Gff = G[np.ix_(free, free)]
    cf = c[free] - G[np.ix_(free, anchored.nonzero()[0])] @ anchor_vals[anchored]
    Cf = C_all[:, free]
    bf = b_all - C_all[:, anchored.nonzero()[0]] @ anchor_vals[anchored]
    # Rows acting only on anchored coordinates are constants; feasibility of
    # the start already vouches for them.
    live = np.nonzero(np.any(np.abs(Cf) > 0, axis=1))[0]
    Cf, bf = Cf[live], bf[live]
    x = theta[free]

    reg_scale = 1e-12 * max(np.trace(Gff), 1.0) / max(free.size, 1)
    if max_iter is None:
        max_iter = 200 * n
    working: list[int] = []
    regularized = False
    status = "max_iter"
    it = 0
    while it < max_iter:
        it += 1
        Cw = Cf[working] if working else np.zeros((0, free.size))
        p, lam, reg = _solve_kkt(Gff, Cw, cf - Gff @ x, free.size, reg_scale)
        regularized = regularized or reg
        if np.max(np.abs(p), initial=0.0) <= 1e-13 * max(1.0, np.max(np.abs(x), initial=0.0)):
            neg = [working[j] for j in range(len(working)) if lam[j] < -kkt_tol]
            if not neg:
                status = "optimal"
                break
            working.remove(min(neg))  # Bland's rule: drop the smallest index
            continue
        # Step length limited by the first blocking inactive constraint.
        alpha = 1.0
        blocker = -1
        for i in range(Cf.shape[0]):
            if i in working:
                continue
            ci_p = Cf[i] @ p
            if ci_p > constraint_tol:
                ratio = (bf[i] - Cf[i] @ x) / ci_p
                if ratio < alpha - 1e-15:
                    alpha, blocker = ratio, i
        x = x + max(alpha, 0.0) * p
        if blocker >= 0:
            working.append(blocker)
            working.sort()

    theta[free] = x
    work_global = np.asarray(live[np.asarray(working, dtype=int)] if working else [], dtype=int)
    return _finish(G, c, y_norm2, theta, C_all, b_all, work_global, free, it,
                   status, regularized, constraint_tol)


def _finish(G, c, y_norm2, theta, C_all, b_all, working, free, iterations,
            status, regularized, constraint_tol):
    objective = float(theta @ G @ theta - 2.0 * c @ theta + y_norm2)
    grad = G @ theta - c
    if C_all.shape[0]:
        slack = C_all @ theta - b_all
        feas = float(np.max(slack, initial=0.0))
        active = np.abs(slack) <= 10 * constraint_tol
    else:
        slack = np.zeros(0)
        feas = 0.0
        active = np.zeros(0, dtype=bool)
    # Stationarity on the free coordinates: grad must lie in the cone spanned
    # by the active inequality normals (nonnegative multipliers).
    if free.size:
        rows = np.nonzero(active)[0]
        if rows.size:
            Ca = C_all[np.ix_(rows, free)]
            lam, *_ = np.linalg.lstsq(Ca.T, -grad[free], rcond=None)
            lam = np.maximum(lam, 0.0)
            stat = float(np.max(np.abs(grad[free] + Ca.T @ lam)))
        else:
            stat = float(np.max(np.abs(grad[free]), initial=0.0))
    else:
        stat = 0.0
    comp = 0.0
    if working.size:
        comp = float(np.max(np.abs(slack[working]), initial=0.0))
    kkt_residual = max(stat, feas, comp)
    return QpSolution(
        theta=theta,
        objective=max(objective, 0.0) if y_norm2 > 0 else objective,
        kkt_residual=kkt_residual,
        iterations=iterations,
        status=status,
        regularized=regularized,
    )


def solve_cls(A, y, constraints: ConstraintSet | None = None, **opts) -> QpSolution:
    """Solve min ||A theta - y||^2 subject to a ConstraintSet."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.ndim != 2 or A.shape[0] != y.size:
        raise ValueError("A and y shapes are inconsistent")
    return solve_cls_gram(A.T @ A, A.T @ y, constraints, y_norm2=float(y @ y), **opts)
