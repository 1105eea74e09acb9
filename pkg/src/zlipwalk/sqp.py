"""Dense SQP for small nonlinear programs with quadratic objectives.

Solves

    min_z  0.5 * (z - z_ref)' W (z - z_ref)
    s.t.   c(z) = 0          (smooth, caller supplies residual + Jacobian)
           G z <= h          (linear)

with W diagonal PSD.  Each iteration linearizes the equalities and solves
a convex QP subproblem (Gauss-Newton Hessian W plus a small regularizer)
through cvxopt's interior-point method, then globalizes with a
backtracking line search on an l1 merit function.  Inequalities are
linear, so iterates stay feasible for them once the start point is.

The problems here have a few hundred variables at most; everything is
dense on purpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvxmat
from cvxopt import solvers as cvxsolvers

_QP_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-12,
    "reltol": 1e-11,
    "feastol": 1e-9,
    "maxiters": 200,
}

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_INFEASIBLE = "infeasible"


@dataclass
class SqpResult:
    z: np.ndarray
    status: str
    iterations: int
    cost: float
    feas: float  # final equality violation, infinity norm
    stationarity: float  # final first-order optimality residual
    worst_constraint: str = ""
    step_norms: list = field(default_factory=list, repr=False)


def _solve_qp(P, g, J, c, G, h):
    """One convex QP subproblem; returns (d, lam_eq, lam_ineq) or None."""
    P = cvxmat(P)
    q = cvxmat(g)
    kwargs = {}
    if G is not None and G.shape[0] > 0:
        kwargs["G"] = cvxmat(G)
        kwargs["h"] = cvxmat(h)
    if J is not None and J.shape[0] > 0:
        kwargs["A"] = cvxmat(J)
        kwargs["b"] = cvxmat(-c)
    try:
        sol = cvxsolvers.qp(P, q, options=_QP_OPTIONS, **kwargs)
    except (ValueError, ArithmeticError, ZeroDivisionError):
        return None
    if sol["status"] not in ("optimal", "unknown"):
        return None
    d = np.asarray(sol["x"]).ravel()
    if not np.all(np.isfinite(d)):
        return None
    lam = np.asarray(sol["y"]).ravel() if "A" in kwargs else np.zeros(0)
    nu = np.asarray(sol["z"]).ravel() if "G" in kwargs else np.zeros(0)
    if sol["status"] == "unknown" and np.linalg.norm(d) > 1e3 * (1 + np.linalg.norm(g)):
        return None
    return d, lam, nu


def _solve_qp_nullspace(M, g, J, c, G, h):
    """Reduced QP on the equality null space; exact curvature there.

    Convexifying the full-space Hessian distorts curvature along the
    feasible manifold and slows the local rate to linear.  Eliminating
    the equalities first keeps the reduced Hessian exact; only its own
    negative eigenvalues (true nonconvexity) get floored.
    """
    if J is None or J.shape[0] == 0:
        return None
    U, sv, Vt = np.linalg.svd(J)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    if rank < J.shape[0] or rank == J.shape[1]:
        return None
    Z = Vt[rank:].T
    dp = Vt[:rank].T @ ((U.T[:rank] @ -c) / sv[:rank])
    R = Z.T @ M @ Z
    vals, vecs = np.linalg.eigh(R)
    R = (vecs * np.maximum(vals, 1e-10)) @ vecs.T
    gz = Z.T @ (g + M @ dp)
    if G is not None and G.shape[0]:
        sub = _solve_qp(R, gz, None, None, G @ Z, h - G @ dp)
    else:
        sub = _solve_qp(R, gz, None, None, None, None)
    if sub is None:
        return None
    v, _, nu = sub
    d = dp + Z @ v
    resid = -(g + M @ d)
    if nu.size:
        resid -= G.T @ nu
    lam = np.linalg.lstsq(J.T, resid, rcond=None)[0]
    return d, lam, nu


def _solve_qp_penalty(P0, g, J, c, G, h, weight=1e8):
    """Fallback for rank-deficient equality Jacobians: quadratic penalty."""
    Hp = P0 + weight * (J.T @ J)
    gp = g + weight * (J.T @ c)
    P = cvxmat(Hp)
    q = cvxmat(gp)
    kwargs = {}
    if G is not None and G.shape[0] > 0:
        kwargs["G"] = cvxmat(G)
        kwargs["h"] = cvxmat(h)
    try:
        sol = cvxsolvers.qp(P, q, options=_QP_OPTIONS, **kwargs)
    except (ValueError, ArithmeticError, ZeroDivisionError):
        return None
    if sol["status"] not in ("optimal", "unknown"):
        return None
    d = np.asarray(sol["x"]).ravel()
    if not np.all(np.isfinite(d)):
        return None
    nu = np.asarray(sol["z"]).ravel() if "G" in kwargs else np.zeros(0)
    return d, np.zeros(J.shape[0]), nu


def project_feasible(z0, G, h):
    """Project z0 onto {z : G z <= h} (least squares); identity if inside."""
    if G is None or G.shape[0] == 0 or np.all(G @ z0 <= h + 1e-12):
        return np.array(z0, dtype=float)
    n = z0.size
    try:
        sol = cvxsolvers.qp(cvxmat(np.eye(n)),
                            cvxmat(-np.asarray(z0, dtype=float)),
                            G=cvxmat(G), h=cvxmat(h), options=_QP_OPTIONS)
    except (ValueError, ArithmeticError, ZeroDivisionError):
        raise RuntimeError("could not find a feasible start point") from None
    z = np.asarray(sol["x"]).ravel()
    # Status alone is not trustworthy: verify the point, whatever cvxopt
    # claims, so inconsistent bounds cannot leak a garbage iterate.
    if sol["status"] not in ("optimal", "unknown") \
            or not np.all(np.isfinite(z)) \
            or np.any(G @ z - h > 1e-7):
        raise RuntimeError("could not find a feasible start point")
    return z


def solve_sqp(z0, w_diag, z_ref, constraints, G=None, h=None,
              eq_labels=None, ineq_labels=None, feas_tol=1e-6, opt_tol=1e-4,
              max_iter=50, reg=1e-8, hessian=None) -> SqpResult:
    """Run the SQP loop.  `constraints(z) -> (c, J)` with dense J.

    `hessian(z, lam) -> dense matrix`, if given, supplies the multiplier-
    weighted sum of constraint Hessians; the subproblem then carries the
    exact curvature of the Lagrangian (made convex by an eigenvalue
    shift), which restores fast local convergence when active-set
    multipliers are large.  Without it the model is Gauss-Newton.
    """
    w_diag = np.asarray(w_diag, dtype=float)
    z_ref = np.asarray(z_ref, dtype=float)
    z = project_feasible(np.asarray(z0, dtype=float), G, h)
    n = z.size
    P_base = np.diag(w_diag + reg)
    lam_prev = None

    def cost(zz):
        dz = zz - z_ref
        return 0.5 * float(dz @ (w_diag * dz))

    def worst_label(c_val, zz):
        worst, label = 0.0, ""
        if c_val.size:
            i = int(np.argmax(np.abs(c_val)))
            worst = abs(float(c_val[i]))
            label = eq_labels[i] if eq_labels else f"eq[{i}]"
        if G is not None and G.shape[0]:
            viol = G @ zz - h
            i = int(np.argmax(viol))
            if viol[i] > worst:
                worst = float(viol[i])
                label = ineq_labels[i] if ineq_labels else f"ineq[{i}]"
        return label

    mu = 10.0
    step_norms = []
    for it in range(1, max_iter + 1):
        c, J = constraints(z)
        feas = float(np.max(np.abs(c))) if c.size else 0.0
        g = w_diag * (z - z_ref)
        # The subproblem steps d from the current iterate, so the linear
        # inequalities become G d <= h - G z.
        h_step = h - G @ z if G is not None and G.shape[0] else h

        # Curvature of the constraints enters only near feasibility, where
        # the lagged multipliers mean something.  The null-space subproblem
        # carries it exactly; if that fails, fall back to a full-space
        # model with the negative eigenvalues dropped.
        P = P_base
        qp = None
        if hessian is not None and lam_prev is not None and lam_prev.size \
                and feas <= 1e-3:
            Hl = hessian(z, lam_prev)
            qp = _solve_qp_nullspace(P_base + Hl, g, J, c, G, h_step)
            if qp is not None:
                P = P_base + Hl
            else:
                vals, vecs = np.linalg.eigh(Hl)
                P = P_base + (vecs * np.maximum(vals, 0.0)) @ vecs.T

        if qp is None:
            qp = _solve_qp(P, g, J, c, G, h_step)
        if qp is None:
            qp = _solve_qp_penalty(P, g, J, c, G, h_step)
        if qp is None:
            status = STATUS_INFEASIBLE if feas > feas_tol else STATUS_MAX_ITER
            return SqpResult(z=z, status=status, iterations=it, cost=cost(z),
                             feas=feas, stationarity=np.inf,
                             worst_constraint=worst_label(c, z),
                             step_norms=step_norms)

        d, lam, nu = qp
        lam_prev = lam
        step = float(np.max(np.abs(d))) if d.size else 0.0
        step_norms.append(step)
        stat = g.copy()
        if lam.size:
            stat += J.T @ lam
        if nu.size:
            stat += G.T @ nu
        stationarity = float(np.max(np.abs(stat)))

        # Predicted merit reduction of the subproblem step.  At a solution
        # it vanishes; the multiplier-based residual is unreliable there
        # because degenerate active sets let cvxopt return large
        # self-cancelling multipliers.
        lam_inf = max(np.max(np.abs(lam)) if lam.size else 0.0,
                      np.max(np.abs(nu)) if nu.size else 0.0)
        mu = max(10.0, 2.0 * lam_inf + 1.0)
        merit0 = cost(z) + mu * np.sum(np.abs(c))
        pred = -(float(g @ d) + 0.5 * float(d @ (P @ d))) \
            + mu * (np.sum(np.abs(c)) - np.sum(np.abs(c + J @ d)))

        if feas <= feas_tol and (step <= 1e-9
                                 or stationarity <= opt_tol * (1.0 + np.max(np.abs(g)))
                                 or pred <= 1e-9 * (1.0 + abs(merit0))):
            return SqpResult(z=z, status=STATUS_OPTIMAL, iterations=it,
                             cost=cost(z), feas=feas, stationarity=stationarity,
                             step_norms=step_norms)

        # The subproblem satisfies its linear rows only to cvxopt's own
        # tolerance, which degrades with conditioning.  Cap the step where
        # it would cross a boundary so iterates stay inside the linear set
        # no matter how sloppy the subproblem solution is.
        alpha_max = 1.0
        if G is not None and G.shape[0]:
            Gd = G @ d
            room = np.maximum(h - G @ z, 0.0) + 1e-9
            grow = Gd > 1e-12
            if np.any(grow):
                alpha_max = min(1.0, float(np.min(room[grow] / Gd[grow])))

        # l1 merit line search; mu dominates the multipliers.
        slope = float(g @ d) - mu * np.sum(np.abs(c))
        alpha = alpha_max
        while alpha > 1e-12:
            z_try = z + alpha * d
            # A wild trial step can push durations past what the model
            # evaluates; treat that like an infinite merit and backtrack.
            try:
                c_try, _ = constraints(z_try)
            except (OverflowError, FloatingPointError):
                alpha *= 0.5
                continue
            merit = cost(z_try) + mu * np.sum(np.abs(c_try))
            if not np.isfinite(merit):
                alpha *= 0.5
                continue
            if merit <= merit0 + 1e-4 * alpha * slope or merit < merit0 - 1e-14:
                break
            alpha *= 0.5
        if alpha <= 1e-12:
            # Stalled line search: classify by what the iterate achieved.
            # The merit cannot resolve relative changes near machine
            # precision, so a stall just short of the feasibility gate is
            # no evidence of an infeasible problem.
            if feas > 100.0 * feas_tol:
                status = STATUS_INFEASIBLE
            elif feas <= feas_tol \
                    and (stationarity <= opt_tol * (1.0 + np.max(np.abs(g)))
                         or pred <= 1e-8 * (1.0 + abs(merit0))):
                status = STATUS_OPTIMAL
            else:
                status = STATUS_MAX_ITER
            return SqpResult(z=z, status=status, iterations=it, cost=cost(z),
                             feas=feas, stationarity=stationarity,
                             worst_constraint=worst_label(c, z),
                             step_norms=step_norms)
        z = z + alpha * d

    c, _ = constraints(z)
    feas = float(np.max(np.abs(c))) if c.size else 0.0
    return SqpResult(z=z, status=STATUS_MAX_ITER, iterations=max_iter,
                     cost=cost(z), feas=feas, stationarity=np.inf,
                     worst_constraint=worst_label(c, z), step_norms=step_norms)
