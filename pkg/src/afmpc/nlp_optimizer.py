"""Dense SQP solver for small constrained nonlinear programs.

Solves minimize J(z) subject to c(z) <= 0 and lb <= z <= ub with
finite-difference gradients, a damped BFGS approximation of the Lagrangian
Hessian, an active-set QP for the search direction, and an l1-merit
backtracking line search. Bounds enter the QP as linear rows, so every
accepted iterate stays inside the box.

Everything is deterministic: no randomness, no wall-clock dependence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "NlpProblem",
    "SolverSettings",
    "Solution",
    "QpInfeasibleError",
    "lagrangian",
    "search_step",
    "minimize",
]

_UNBOUNDED = 1e19
_QP_FEAS_TOL = 1e-9
_MULT_TOL = 1e-10
_ARMIJO = 1e-4
_MAX_BACKTRACKS = 30


class QpInfeasibleError(RuntimeError):
    """The linearized QP subproblem admits no point."""


@dataclass
class NlpProblem:
    dimension: int
    objective: Callable[[np.ndarray], float]
    inequality_constraints: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lower_bounds: Optional[np.ndarray] = None
    upper_bounds: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        if self.lower_bounds is None:
            self.lower_bounds = np.full(self.dimension, -np.inf)
        if self.upper_bounds is None:
            self.upper_bounds = np.full(self.dimension, np.inf)
        self.lower_bounds = np.asarray(self.lower_bounds, dtype=float)
        self.upper_bounds = np.asarray(self.upper_bounds, dtype=float)
        if self.lower_bounds.shape != (self.dimension,) or self.upper_bounds.shape != (
            self.dimension,
        ):
            raise ValueError("bounds must be vectors of length dimension")
        if np.any(self.lower_bounds > self.upper_bounds):
            raise ValueError("lower_bounds must not exceed upper_bounds")

    def constraint_values(self, z: np.ndarray) -> np.ndarray:
        if self.inequality_constraints is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.inequality_constraints(z), dtype=float))


@dataclass
class SolverSettings:
    kkt_tolerance: float = 1e-6
    max_iterations: int = 100
    finite_difference_step: float = 1e-6
    hessian_reset_threshold: float = 1e8

    def __post_init__(self) -> None:
        if (
            self.kkt_tolerance <= 0.0
            or self.max_iterations <= 0
            or self.finite_difference_step <= 0.0
            or self.hessian_reset_threshold <= 0.0
        ):
            raise ValueError("solver settings must all be positive")


@dataclass
class Solution:
    minimizer: np.ndarray
    multipliers: np.ndarray
    objective_value: float
    kkt_residual: float
    iterations: int
    status: str  # converged | max_iter | infeasible
    objective_evaluations: int = 0
    # (merit_before, merit_after) per accepted line-search step
    merit_decreases: tuple = field(default_factory=tuple)


def lagrangian(problem: NlpProblem, z: np.ndarray, lam: np.ndarray) -> float:
    """Objective plus multiplier-weighted inequality values."""
    z = np.asarray(z, dtype=float)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    c = problem.constraint_values(z)
    if lam.shape != c.shape:
        raise ValueError("multiplier vector length must match the constraint count")
    return float(problem.objective(z)) + float(lam @ c)


def _forward_grad(fun, z, f0, h):
    n = z.shape[0]
    g = np.empty(n)
    for i in range(n):
        zp = z.copy()
        zp[i] += h
        g[i] = (fun(zp) - f0) / h
    return g


def _central_grad(fun, z, h):
    n = z.shape[0]
    g = np.empty(n)
    for i in range(n):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        g[i] = (fun(zp) - fun(zm)) / (2.0 * h)
    return g


def _forward_jac(confun, z, c0, h):
    n = z.shape[0]
    J = np.empty((c0.shape[0], n))
    for i in range(n):
        zp = z.copy()
        zp[i] += h
        J[:, i] = (confun(zp) - c0) / h
    return J


def _central_jac(confun, z, h):
    n = z.shape[0]
    cp = None
    cols = []
    for i in range(n):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        cols.append((confun(zp) - confun(zm)) / (2.0 * h))
    return np.stack(cols, axis=1) if cols else np.zeros((0, n))


def _fd_lagrangian_hessian(fun, confun, lam, z, h):
    """Second-difference Hessian of the Lagrangian, eigenvalue-floored."""

    def lagr(zz):
        val = fun(zz)
        if lam.size:
            val += float(lam @ confun(zz))
        return val

    n = z.shape[0]
    step = max(h, 1e-4) * max(1.0, float(np.abs(z).max()))
    H = np.empty((n, n))
    l0 = lagr(z)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        H[i, i] = (lagr(z + ei) - 2.0 * l0 + lagr(z - ei)) / step**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = step
            mixed = (
                lagr(z + ei + ej)
                - lagr(z + ei - ej)
                - lagr(z - ei + ej)
                + lagr(z - ei - ej)
            ) / (4.0 * step**2)
            H[i, j] = mixed
            H[j, i] = mixed
    if not np.all(np.isfinite(H)):
        return np.eye(n)
    H = 0.5 * (H + H.T)
    vals, vecs = np.linalg.eigh(H)
    floor = 1e-6 * max(1.0, float(np.abs(vals).max()))
    # clip weak or negative curvature so the QP stays convex
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def _solve_sym(M, rhs):
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        sol = None
    if sol is None or not np.all(np.isfinite(sol)):
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    return sol


def _active_set_qp(H, g, A, b):
    """min 1/2 p'Hp + g'p s.t. A p <= b. Returns (p, multipliers).

    Add-most-violated / drop-most-negative working-set iteration; adequate
    for the small dense subproblems built here.
    """
    n = g.shape[0]
    m = A.shape[0]
    scale = max(1.0, float(np.abs(b).max())) if b.size else 1.0
    work: list[int] = []
    cap = 5 * (m + n) + 25
    for _ in range(cap):
        if work:
            Aw = A[work]
            k = len(work)
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = H
            kkt[:n, n:] = Aw.T
            kkt[n:, :n] = Aw
            sol = _solve_sym(kkt, np.concatenate([-g, b[work]]))
            p = sol[:n]
            lam_w = sol[n:]
        else:
            p = _solve_sym(H, -g)
            lam_w = np.zeros(0)
        if not np.all(np.isfinite(p)):
            raise QpInfeasibleError("QP infeasible")
        viol = A @ p - b if m else np.zeros(0)
        worst = float(viol.max()) if m else 0.0
        if worst > _QP_FEAS_TOL * scale:
            j = int(np.argmax(viol))
            if j in work:
                raise QpInfeasibleError("QP infeasible")
            work.append(j)
            continue
        if lam_w.size and float(lam_w.min()) < -_MULT_TOL:
            work.pop(int(np.argmin(lam_w)))
            continue
        lam = np.zeros(m)
        if work:
            lam[work] = np.maximum(lam_w, 0.0)
        return p, lam
    raise QpInfeasibleError("QP infeasible")


def _bound_rows(problem: NlpProblem, z: np.ndarray):
    """Box bounds as rows of A p <= b around the current iterate."""
    n = problem.dimension
    rows = []
    gaps = []
    signs = []
    idxs = []
    for i in range(n):
        if problem.upper_bounds[i] < _UNBOUNDED:
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e)
            gaps.append(problem.upper_bounds[i] - z[i])
            signs.append(1.0)
            idxs.append(i)
        if problem.lower_bounds[i] > -_UNBOUNDED:
            e = np.zeros(n)
            e[i] = -1.0
            rows.append(e)
            gaps.append(z[i] - problem.lower_bounds[i])
            signs.append(-1.0)
            idxs.append(i)
    A = np.array(rows) if rows else np.zeros((0, n))
    return A, np.array(gaps), np.array(signs), np.array(idxs, dtype=int)


def _kkt_residual(g, c0, Jc, lam_gen, lam_bnd, bnd_A, bnd_gaps):
    grad_l = g.copy()
    if lam_gen.size:
        grad_l += Jc.T @ lam_gen
    if lam_bnd.size:
        grad_l += bnd_A.T @ lam_bnd
    stat = float(np.abs(grad_l).max())
    feas = float(np.maximum(c0, 0.0).max()) if c0.size else 0.0
    comp = 0.0
    if lam_gen.size:
        comp = float(np.abs(lam_gen * c0).max())
    if lam_bnd.size:
        comp = max(comp, float(np.abs(lam_bnd * bnd_gaps).max()))
    return max(stat, feas, comp)


def search_step(problem: NlpProblem, z: np.ndarray, lam: np.ndarray, hessian_approx: np.ndarray):
    """QP search direction from linearized constraints at z.

    Returns (p, lam_next) where lam_next are the multipliers of the general
    inequality rows. Raises QpInfeasibleError when the linearized rows admit
    no point.
    """
    z = np.asarray(z, dtype=float)
    h = 1e-6
    f0 = float(problem.objective(z))
    g = _forward_grad(problem.objective, z, f0, h)
    c0 = problem.constraint_values(z)
    Jc = _forward_jac(problem.constraint_values, z, c0, h) if c0.size else np.zeros((0, z.size))
    bnd_A, bnd_gaps, _, _ = _bound_rows(problem, z)
    A = np.vstack([Jc, bnd_A]) if (c0.size or bnd_A.shape[0]) else np.zeros((0, z.size))
    b = np.concatenate([-c0, bnd_gaps])
    p, lam_all = _active_set_qp(hessian_approx, g, A, b)
    return p, lam_all[: c0.size]


def _elastic_qp(H, g, Jc, c0, bnd_A, bnd_gaps, rho):
    """l1-relaxed QP with one slack per general constraint row."""
    n = g.shape[0]
    mg = c0.shape[0]
    nb = bnd_A.shape[0]
    H_ext = np.zeros((n + mg, n + mg))
    H_ext[:n, :n] = H
    reg = 1e-8 * max(1.0, float(np.abs(H).max()))
    H_ext[n:, n:] = reg * np.eye(mg)
    g_ext = np.concatenate([g, rho * np.ones(mg)])
    rows = []
    rhs = []
    # general rows get a slack: Jc p - s <= -c
    gen = np.hstack([Jc, -np.eye(mg)])
    rows.append(gen)
    rhs.append(-c0)
    if nb:
        rows.append(np.hstack([bnd_A, np.zeros((nb, mg))]))
        rhs.append(bnd_gaps)
    # slacks stay non-negative
    rows.append(np.hstack([np.zeros((mg, n)), -np.eye(mg)]))
    rhs.append(np.zeros(mg))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    p_ext, lam = _active_set_qp(H_ext, g_ext, A, b)
    return p_ext[:n], lam[:mg], lam[mg : mg + nb]


def _merit(f, c0, mu):
    return f + mu * float(np.maximum(c0, 0.0).sum()) if c0.size else f


def minimize(problem: NlpProblem, z0: np.ndarray, settings: Optional[SolverSettings] = None) -> Solution:
    """SQP iteration with l1-merit backtracking; deterministic.

    The main loop uses forward differences; once the residual is small the
    solution is polished with a few central-difference steps, which are
    bias-free on quadratics and sharpen the final KKT residual.
    """
    if settings is None:
        settings = SolverSettings()
    n = problem.dimension
    z = np.clip(np.asarray(z0, dtype=float).copy(), problem.lower_bounds, problem.upper_bounds)
    if z.shape != (n,):
        raise ValueError(f"z0 must be a vector of length {n}")

    evals = [0]
    raw_objective = problem.objective

    def fun(x):
        evals[0] += 1
        return float(raw_objective(x))

    confun = problem.constraint_values
    h = settings.finite_difference_step
    tol = settings.kkt_tolerance

    f0 = fun(z)
    c0 = confun(z)
    m = c0.shape[0]
    g = _forward_grad(fun, z, f0, h)
    Jc = _forward_jac(confun, z, c0, h) if m else np.zeros((0, n))
    H = np.eye(n)
    lam_gen = np.zeros(m)
    bnd_A, bnd_gaps, _, _ = _bound_rows(problem, z)
    lam_bnd = np.zeros(bnd_A.shape[0])
    mu = 10.0
    iters = 0
    merit_pairs: list[tuple[float, float]] = []
    best = (float("inf"), z.copy(), lam_gen.copy(), f0, float("inf"))  # residual-keyed
    stall = 0

    def record_best(res, zc, lamc, fc):
        nonlocal best
        if res < best[0]:
            best = (res, zc.copy(), lamc.copy(), fc, res)

    status = "max_iter"
    for _ in range(settings.max_iterations):
        res = _kkt_residual(g, c0, Jc, lam_gen, lam_bnd, bnd_A, bnd_gaps)
        record_best(res, z, lam_gen, f0)
        if res <= tol:
            status = "converged"
            break
        try:
            A_all = np.vstack([Jc, bnd_A]) if (m or bnd_A.shape[0]) else np.zeros((0, n))
            b_all = np.concatenate([-c0, bnd_gaps])
            p, lam_all = _active_set_qp(H, g, A_all, b_all)
            lam_gen_new = lam_all[:m]
            lam_bnd_new = lam_all[m:]
        except QpInfeasibleError:
            rho = 1e4 * max(1.0, float(np.abs(g).max()))
            p, lam_gen_new, lam_bnd_new = _elastic_qp(H, g, Jc, c0, bnd_A, bnd_gaps, rho)
        iters += 1
        if float(np.abs(p).max()) <= 1e-14:
            lam_gen, lam_bnd = lam_gen_new, lam_bnd_new
            continue
        mu = max(mu, 2.0 * float(np.abs(lam_gen_new).max() if m else 0.0) + 1.0)
        phi0 = _merit(f0, c0, mu)
        # directional derivative of the l1 merit along p
        d = float(g @ p) - mu * float(np.maximum(c0, 0.0).sum() if m else 0.0)
        alpha = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            z_try = z + alpha * p
            f_try = fun(z_try)
            c_try = confun(z_try)
            phi_try = _merit(f_try, c_try, mu)
            if phi_try <= phi0 + _ARMIJO * alpha * min(d, 0.0) and phi_try <= phi0:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            stall += 1
            if stall >= 2:
                break
            H = np.eye(n)
            continue
        stall = 0
        merit_pairs.append((phi0, phi_try))
        g_new = _forward_grad(fun, z_try, f_try, h)
        Jc_new = _forward_jac(confun, z_try, c_try, h) if m else Jc
        # damped BFGS on the Lagrangian gradient difference
        s = z_try - z
        y = g_new - g
        if m:
            y = y + (Jc_new - Jc).T @ lam_gen_new
        sHs = float(s @ (H @ s))
        sy = float(s @ y)
        if sHs > 0.0:
            if sy < 0.2 * sHs:
                theta = 0.8 * sHs / (sHs - sy)
                y = theta * y + (1.0 - theta) * (H @ s)
                sy = float(s @ y)
            if sy > 1e-12:
                Hs = H @ s
                H = H + np.outer(y, y) / sy - np.outer(Hs, Hs) / sHs
        if not np.all(np.isfinite(H)) or float(np.abs(H).max()) > settings.hessian_reset_threshold:
            H = np.eye(n)
        z, f0, c0, g, Jc = z_try, f_try, c_try, g_new, Jc_new
        lam_gen, lam_bnd = lam_gen_new, lam_bnd_new
        bnd_A, bnd_gaps, _, _ = _bound_rows(problem, z)
    else:
        res = _kkt_residual(g, c0, Jc, lam_gen, lam_bnd, bnd_A, bnd_gaps)
        record_best(res, z, lam_gen, f0)

    # central-difference polish: bias-free gradients near the solution.
    # The forward-difference residual can underreport the true one by the
    # bias ~ h*||H||/2, so for tight tolerances this runs even when the
    # main loop met tol. For loose tolerances (bias irrelevant) it is a
    # rescue pass, engaged only when the main loop stalled above tol.
    if best[0] <= 1e-3 and (tol < 1e-5 or best[0] > tol):
        z = best[1].copy()
        lam_gen = best[2].copy()
        f0 = fun(z)
        c0 = confun(z)
        for _ in range(3):
            g = _central_grad(fun, z, h)
            Jc = _central_jac(confun, z, h) if m else np.zeros((0, n))
            bnd_A, bnd_gaps, _, _ = _bound_rows(problem, z)
            res = _kkt_residual(g, c0, Jc, lam_gen, lam_bnd, bnd_A, bnd_gaps)
            record_best(res, z, lam_gen, f0)
            if res <= max(1e-12, 1e-4 * tol):
                break
            H_pol = _fd_lagrangian_hessian(fun, confun, lam_gen, z, h)
            try:
                A_all = np.vstack([Jc, bnd_A]) if (m or bnd_A.shape[0]) else np.zeros((0, n))
                b_all = np.concatenate([-c0, bnd_gaps])
                p, lam_all = _active_set_qp(H_pol, g, A_all, b_all)
            except QpInfeasibleError:
                break
            lam_gen = lam_all[:m]
            lam_bnd = lam_all[m:]
            iters += 1
            improved = False
            alpha = 1.0
            # halve until the residual actually drops
            for _ in range(6):
                z_try = z + alpha * p
                f_try = fun(z_try)
                c_try = confun(z_try)
                g_try = _central_grad(fun, z_try, h)
                Jc_try = _central_jac(confun, z_try, h) if m else np.zeros((0, n))
                bnd_A_t, bnd_gaps_t, _, _ = _bound_rows(problem, z_try)
                res_try = _kkt_residual(
                    g_try, c_try, Jc_try, lam_gen, lam_bnd, bnd_A_t, bnd_gaps_t
                )
                if res_try < 0.5 * res:
                    z, f0, c0 = z_try, f_try, c_try
                    record_best(res_try, z, lam_gen, f0)
                    improved = True
                    break
                alpha *= 0.5
            if not improved:
                break

    res_final, z_best, lam_best, f_best, _ = best
    feas_final = float(np.maximum(confun(z_best), 0.0).max()) if m else 0.0
    if res_final <= tol:
        status = "converged"
    elif feas_final > max(tol, 1e-8):
        status = "infeasible"
    else:
        status = "max_iter"
    return Solution(
        minimizer=z_best,
        multipliers=lam_best,
        objective_value=float(f_best),
        kkt_residual=float(res_final),
        iterations=iters,
        status=status,
        objective_evaluations=evals[0],
        merit_decreases=tuple(merit_pairs),
    )
