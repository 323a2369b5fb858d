"""Convex quadratic programming engine.

Canonical problem:

    minimize    0.5 x' Q x + c' x
    subject to  A_eq x  = b_eq
                A_in x <= b_in
                lb <= x <= ub

The default engine is a primal-dual interior-point method with Mehrotra
predictor-corrector steps; bounds are folded into the inequality block.
Infeasibility is certified by an elastic phase-1 solve whose positive
optimum is attached to the returned solution.  A first-order
operator-splitting engine is available behind the ``engine`` switch for
large instances; it reports Optimal only when its polished solution
passes the same residual tolerance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu


class QpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITER_LIMIT = "IterLimit"


@dataclass
class QpProblem:
    Q: sp.spmatrix | None
    c: np.ndarray
    A_eq: sp.spmatrix | None = None
    b_eq: np.ndarray | None = None
    A_in: sp.spmatrix | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        if self.Q is not None:
            self.Q = sp.csr_matrix(self.Q)
        if self.A_eq is not None and self.A_eq.shape[0] > 0:
            self.A_eq = sp.csr_matrix(self.A_eq)
            self.b_eq = np.asarray(self.b_eq, dtype=float)
        else:
            self.A_eq = sp.csr_matrix((0, n))
            self.b_eq = np.zeros(0)
        if self.A_in is not None and self.A_in.shape[0] > 0:
            self.A_in = sp.csr_matrix(self.A_in)
            self.b_in = np.asarray(self.b_in, dtype=float)
        else:
            self.A_in = sp.csr_matrix((0, n))
            self.b_in = np.zeros(0)
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, float)

    @property
    def n(self) -> int:
        return self.c.size

    def objective_value(self, x: np.ndarray) -> float:
        val = float(self.c @ x)
        if self.Q is not None:
            val += 0.5 * float(x @ (self.Q @ x))
        return val


@dataclass
class QpSolution:
    status: QpStatus
    primal: np.ndarray
    objective: float
    dual_eq: np.ndarray
    dual_in: np.ndarray
    dual_lb: np.ndarray
    dual_ub: np.ndarray
    kkt_residuals: tuple[float, float, float, float]
    iterations: int
    certificate: dict | None = None


@dataclass
class QpConfig:
    engine: str = "interior-point"
    tol: float = 1e-8
    max_iter: int = 200
    admm_max_iter: int = 4000
    admm_tol: float = 1e-9


def kkt_residuals(problem: QpProblem, x, y, z, zl, zu) -> tuple[float, float, float, float]:
    """Recompute KKT residual norms from raw problem data.

    Returns (stationarity, primal feasibility, dual feasibility,
    complementarity) in the infinity norm.  Sign convention: y free for
    equalities, z >= 0 for A_in x <= b_in, zl >= 0 for lb - x <= 0,
    zu >= 0 for x - ub <= 0.
    """
    x = np.asarray(x, float)
    grad = problem.c.copy()
    if problem.Q is not None:
        grad = grad + problem.Q @ x
    if problem.A_eq.shape[0]:
        grad = grad + problem.A_eq.T @ np.asarray(y, float)
    if problem.A_in.shape[0]:
        grad = grad + problem.A_in.T @ np.asarray(z, float)
    grad = grad + np.asarray(zu, float) - np.asarray(zl, float)
    stat = float(np.max(np.abs(grad))) if grad.size else 0.0

    viol = [0.0]
    if problem.A_eq.shape[0]:
        viol.append(float(np.max(np.abs(problem.A_eq @ x - problem.b_eq))))
    if problem.A_in.shape[0]:
        viol.append(float(np.max(np.maximum(problem.A_in @ x - problem.b_in, 0.0))))
    finite_lb = np.isfinite(problem.lb)
    finite_ub = np.isfinite(problem.ub)
    if finite_lb.any():
        viol.append(float(np.max(np.maximum(problem.lb[finite_lb] - x[finite_lb], 0.0))))
    if finite_ub.any():
        viol.append(float(np.max(np.maximum(x[finite_ub] - problem.ub[finite_ub], 0.0))))
    pres = max(viol)

    dres = 0.0
    for arr in (z, zl, zu):
        arr = np.asarray(arr, float)
        if arr.size:
            dres = max(dres, float(np.max(np.maximum(-arr, 0.0))))

    comp = [0.0]
    if problem.A_in.shape[0]:
        comp.append(float(np.max(np.abs(np.asarray(z) * (problem.A_in @ x - problem.b_in)))))
    if finite_lb.any():
        comp.append(float(np.max(np.abs(np.asarray(zl)[finite_lb] * (problem.lb - x)[finite_lb]))))
    if finite_ub.any():
        comp.append(float(np.max(np.abs(np.asarray(zu)[finite_ub] * (x - problem.ub)[finite_ub]))))
    return (stat, pres, dres, max(comp))


def _fold_bounds(problem: QpProblem):
    """Stack A_in with finite-bound singleton rows into one G x <= h."""
    n = problem.n
    blocks = [problem.A_in]
    rhs = [problem.b_in]
    fin_ub = np.where(np.isfinite(problem.ub))[0]
    fin_lb = np.where(np.isfinite(problem.lb))[0]
    if fin_ub.size:
        blocks.append(sp.csr_matrix(
            (np.ones(fin_ub.size), (np.arange(fin_ub.size), fin_ub)), shape=(fin_ub.size, n)
        ))
        rhs.append(problem.ub[fin_ub])
    if fin_lb.size:
        blocks.append(sp.csr_matrix(
            (-np.ones(fin_lb.size), (np.arange(fin_lb.size), fin_lb)), shape=(fin_lb.size, n)
        ))
        rhs.append(-problem.lb[fin_lb])
    G = sp.vstack(blocks, format="csr") if n else sp.csr_matrix((0, 0))
    h = np.concatenate(rhs) if rhs else np.zeros(0)
    return G, h, fin_ub, fin_lb


def _split_duals(problem: QpProblem, z_full, fin_ub, fin_lb):
    m_in = problem.A_in.shape[0]
    z = z_full[:m_in]
    zu = np.zeros(problem.n)
    zl = np.zeros(problem.n)
    pos = m_in
    zu[fin_ub] = z_full[pos : pos + fin_ub.size]
    pos += fin_ub.size
    zl[fin_lb] = z_full[pos : pos + fin_lb.size]
    return z, zl, zu


class _KktSolver:
    """Factorizes the regularized reduced KKT system and refines solves
    against the unregularized matrix."""

    def __init__(self, Q, A, G, n, me):
        self.Q = Q if Q is not None else sp.csr_matrix((n, n))
        self.A = A
        self.G = G
        self.n = n
        self.me = me

    def factor(self, w_inv: np.ndarray):
        G = self.G
        H = self.Q + (G.T @ sp.diags(w_inv) @ G) if G.shape[0] else self.Q.copy()
        scale = max(1.0, abs(H.diagonal()).max() if H.shape[0] else 1.0)
        self.delta = 1e-10 * scale
        K = sp.bmat(
            [
                [H, self.A.T if self.me else None],
                [self.A if self.me else None, sp.identity(self.me) * 0 if self.me else None],
            ],
            format="csc",
        ) if self.me else sp.csc_matrix(H)
        reg = sp.diags(
            np.concatenate([np.full(self.n, self.delta), np.full(self.me, -self.delta)])
        )
        self.K_true = K
        self.lu = splu((K + reg).tocsc())

    def solve(self, r1: np.ndarray, r2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.concatenate([r1, r2])
        sol = self.lu.solve(rhs)
        for _ in range(2):
            resid = rhs - self.K_true @ sol
            if np.max(np.abs(resid)) < 1e-14 * (1 + np.max(np.abs(rhs))):
                break
            sol = sol + self.lu.solve(resid)
        return sol[: self.n], sol[self.n :]


def _solve_equality_qp(problem: QpProblem) -> QpSolution:
    n, me = problem.n, problem.A_eq.shape[0]
    solver = _KktSolver(problem.Q, problem.A_eq, sp.csr_matrix((0, n)), n, me)
    solver.factor(np.zeros(0))
    x, y = solver.solve(-problem.c, problem.b_eq)
    zeros = np.zeros(n)
    res = kkt_residuals(problem, x, y, np.zeros(0), zeros, zeros)
    status = QpStatus.OPTIMAL if max(res[0], res[1]) < 1e-7 * (1 + _data_scale(problem)) else QpStatus.ITER_LIMIT
    return QpSolution(status, x, problem.objective_value(x), y, np.zeros(0), zeros, zeros, res, 1)


def _data_scale(problem: QpProblem) -> float:
    s = float(np.max(np.abs(problem.c))) if problem.c.size else 0.0
    if problem.b_eq.size:
        s = max(s, float(np.max(np.abs(problem.b_eq))))
    if problem.b_in.size:
        s = max(s, float(np.max(np.abs(problem.b_in))))
    return s


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not neg.any():
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def solve_qp(
    problem: QpProblem,
    warm_start: np.ndarray | None = None,
    config: QpConfig | None = None,
    _allow_phase1: bool = True,
) -> QpSolution:
    """Solve a convex QP.  Q must be positive semidefinite."""
    config = config or QpConfig()
    if config.engine == "admm":
        return _solve_admm(problem, config)

    n = problem.n
    if np.any(problem.lb > problem.ub + 1e-12):
        bad = int(np.argmax(problem.lb - problem.ub))
        return QpSolution(
            QpStatus.INFEASIBLE, np.zeros(n), math.inf, np.zeros(problem.A_eq.shape[0]),
            np.zeros(problem.A_in.shape[0]), np.zeros(n), np.zeros(n),
            (0, float(problem.lb[bad] - problem.ub[bad]), 0, 0), 0,
            certificate={"kind": "bound-contradiction", "column": bad},
        )

    G, h, fin_ub, fin_lb = _fold_bounds(problem)
    mi, me = G.shape[0], problem.A_eq.shape[0]
    if mi == 0:
        return _solve_equality_qp(problem)

    A, b = problem.A_eq, problem.b_eq
    c = problem.c
    kkt = _KktSolver(problem.Q, A, G, n, me)

    # starting point: an equality-weighted least-squares solve, slacks
    # shifted strictly positive
    kkt.factor(np.ones(mi))
    x, y = kkt.solve(-c + G.T @ h, b)
    if warm_start is not None and warm_start.size == n:
        x = warm_start.astype(float).copy()
    s_raw = h - G @ x
    shift = max(0.0, -1.5 * float(np.min(s_raw))) + 1e-2 * (1 + float(np.max(np.abs(h))))
    s = s_raw + shift
    z = np.full(mi, max(1.0, shift))
    if me == 0:
        y = np.zeros(0)

    scale_b = 1 + (float(np.max(np.abs(b))) if me else 0.0)
    scale_h = 1 + float(np.max(np.abs(h)))
    scale_c = 1 + float(np.max(np.abs(c))) if c.size else 1.0
    stall = 0
    best_pres = np.inf

    for it in range(1, config.max_iter + 1):
        Qx = problem.Q @ x if problem.Q is not None else np.zeros(n)
        rd = Qx + c + (A.T @ y if me else 0.0) + G.T @ z
        rp = (A @ x - b) if me else np.zeros(0)
        rg = G @ x + s - h
        mu = float(s @ z) / mi
        obj = problem.objective_value(x)

        pres = max(
            (float(np.max(np.abs(rp))) / scale_b) if me else 0.0,
            float(np.max(np.abs(rg))) / scale_h,
        )
        dres = float(np.max(np.abs(rd))) / scale_c
        gap = mu / (1 + abs(obj))
        if pres < config.tol and dres < config.tol and gap < config.tol:
            z_in, zl, zu = _split_duals(problem, z, fin_ub, fin_lb)
            res = kkt_residuals(problem, x, y, z_in, zl, zu)
            return QpSolution(QpStatus.OPTIMAL, x, obj, y, z_in, zl, zu, res, it)

        if abs(obj) > 1e14 or float(np.max(np.abs(x))) > 1e13:
            return QpSolution(
                QpStatus.UNBOUNDED, x, obj, y, *_split_duals(problem, z, fin_ub, fin_lb),
                (dres, pres, 0, mu), it,
            )

        # infeasibility heuristic: primal residual stalls while the dual
        # iterates blow up -> certify with an elastic phase-1 solve
        if pres < best_pres * 0.9:
            best_pres = pres
            stall = 0
        else:
            stall += 1
        dual_norm = float(np.max(np.abs(z))) + (float(np.max(np.abs(y))) if me else 0.0)
        if _allow_phase1 and ((stall > 20 and pres > 1e-6) or dual_norm > 1e11):
            return _certify_infeasible(problem, config, fallback=(x, y, z, s, it))

        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            w_inv = z / s
        breakdown = (not np.all(np.isfinite(w_inv))) or float(np.max(w_inv)) > 1e15
        if not breakdown:
            try:
                kkt.factor(w_inv)
            except RuntimeError:
                breakdown = True
        if breakdown:
            # slacks collapsed before convergence: the node is either
            # infeasible or too ill-conditioned for this scaling
            if _allow_phase1 and pres > config.tol:
                return _certify_infeasible(problem, config, fallback=(x, y, z, s, it))
            z_in, zl, zu = _split_duals(problem, z, fin_ub, fin_lb)
            res = kkt_residuals(problem, x, y, z_in, zl, zu)
            return QpSolution(QpStatus.ITER_LIMIT, x, problem.objective_value(x), y,
                              z_in, zl, zu, res, it)

        # predictor
        rc = s * z
        r1 = -rd - G.T @ (w_inv * (rg - rc / z))
        dx_a, dy_a = kkt.solve(r1, -rp)
        dz_a = w_inv * (G @ dx_a + rg - rc / z)
        ds_a = -rg - G @ dx_a
        ap = min(1.0, _max_step(s, ds_a))
        ad = min(1.0, _max_step(z, dz_a))
        mu_aff = float((s + ap * ds_a) @ (z + ad * dz_a)) / mi
        sigma = min(1.0, max((mu_aff / mu) ** 3, 1e-10))

        # corrector
        rc = s * z + ds_a * dz_a - sigma * mu
        r1 = -rd - G.T @ (w_inv * (rg - rc / z))
        dx, dy = kkt.solve(r1, -rp)
        dz = w_inv * (G @ dx + rg - rc / z)
        ds = -rg - G @ dx

        eta = min(0.9995, max(0.99, 1.0 - 10 * mu))
        ap = min(1.0, eta * _max_step(s, ds))
        ad = min(1.0, eta * _max_step(z, dz))
        x = x + ap * dx
        s = s + ap * ds
        z = z + ad * dz
        if me:
            y = y + ad * dy

    if _allow_phase1 and pres > math.sqrt(config.tol):
        return _certify_infeasible(problem, config, fallback=(x, y, z, s, config.max_iter))
    z_in, zl, zu = _split_duals(problem, z, fin_ub, fin_lb)
    res = kkt_residuals(problem, x, y, z_in, zl, zu)
    return QpSolution(
        QpStatus.ITER_LIMIT, x, problem.objective_value(x), y, z_in, zl, zu, res,
        config.max_iter,
    )


def _certify_infeasible(problem: QpProblem, config: QpConfig, fallback) -> QpSolution:
    """Elastic phase-1: minimal total row violation subject to the hard
    variable bounds.  A positive optimum certifies primal infeasibility
    (bound contradictions are caught upfront in solve_qp)."""
    n = problem.n
    me, mi = problem.A_eq.shape[0], problem.A_in.shape[0]
    # variables [x, t+, t-, w]: A x + t+ - t- = b, G x - w <= h, t, w >= 0
    n1 = n + 2 * me + mi
    c1 = np.concatenate([np.zeros(n), np.ones(2 * me + mi)])
    A1 = sp.hstack(
        [problem.A_eq, sp.identity(me), -sp.identity(me), sp.csr_matrix((me, mi))],
        format="csr",
    ) if me else None
    G1 = sp.hstack(
        [problem.A_in, sp.csr_matrix((mi, 2 * me)), -sp.identity(mi)], format="csr"
    ) if mi else None
    lb1 = np.concatenate([problem.lb, np.zeros(2 * me + mi)])
    ub1 = np.concatenate([problem.ub, np.full(2 * me + mi, np.inf)])
    phase1 = QpProblem(None, c1, A1, problem.b_eq, G1, problem.b_in, lb1, ub1)
    sol = solve_qp(phase1, config=QpConfig(tol=config.tol, max_iter=config.max_iter),
                   _allow_phase1=False)
    scale = 1 + _data_scale(problem)
    x_f, y_f, z_f, s_f, iters = fallback
    if sol.status == QpStatus.OPTIMAL and sol.objective > 1e-7 * scale:
        cert = {"kind": "phase1", "violation": sol.objective,
                "dual_eq": sol.dual_eq, "dual_in": sol.dual_in[:mi]}
        return QpSolution(
            QpStatus.INFEASIBLE, sol.primal[:n], math.inf, np.zeros(me),
            np.zeros(mi), np.zeros(n), np.zeros(n),
            (0.0, sol.objective, 0.0, 0.0), iters + sol.iterations, certificate=cert,
        )
    if sol.status == QpStatus.OPTIMAL:
        # feasible after all: restart from the repaired point
        retry = solve_qp(problem, warm_start=sol.primal[:n], config=config,
                         _allow_phase1=False)
        retry.iterations += iters + sol.iterations
        return retry
    z_in, zl, zu = _split_duals(problem, z_f, *_fold_bounds(problem)[2:])
    res = kkt_residuals(problem, x_f, y_f, z_in, zl, zu)
    return QpSolution(QpStatus.ITER_LIMIT, x_f, problem.objective_value(x_f), y_f,
                      z_in, zl, zu, res, iters + sol.iterations)


def _solve_admm(problem: QpProblem, config: QpConfig) -> QpSolution:
    """Operator-splitting engine (OSQP-style splitting, fixed step).

    Intended for large instances; reports Optimal only when the polished
    active-set solution passes the interior-point residual tolerance."""
    n = problem.n
    me, mi = problem.A_eq.shape[0], problem.A_in.shape[0]
    M = sp.vstack([problem.A_eq, problem.A_in, sp.identity(n)], format="csr")
    l = np.concatenate([problem.b_eq, np.full(mi, -np.inf), problem.lb])
    u = np.concatenate([problem.b_eq, problem.b_in, problem.ub])
    m = M.shape[0]
    rho = np.full(m, 1.0)
    rho[:me] = 1e3
    sigma = 1e-6
    alpha = 1.6
    Q = problem.Q if problem.Q is not None else sp.csr_matrix((n, n))
    K = sp.bmat([[Q + sigma * sp.identity(n), M.T], [M, -sp.diags(1.0 / rho)]], format="csc")
    lu = splu(K)

    x = np.zeros(n)
    zv = np.clip(np.zeros(m), l, u)
    yv = np.zeros(m)
    it = 0
    for it in range(1, config.admm_max_iter + 1):
        rhs = np.concatenate([sigma * x - problem.c, zv - yv / rho])
        sol = lu.solve(rhs)
        xt, nu = sol[:n], sol[n:]
        zt = zv + (nu - yv) / rho
        x = alpha * xt + (1 - alpha) * x
        z_relax = alpha * zt + (1 - alpha) * zv
        zv_new = np.clip(z_relax + yv / rho, l, u)
        yv = yv + rho * (z_relax - zv_new)
        zv = zv_new
        if it % 25 == 0:
            rp = float(np.max(np.abs(M @ x - zv)))
            rd_vec = Q @ x + problem.c + M.T @ yv
            rd = float(np.max(np.abs(rd_vec)))
            if rp < config.admm_tol * 10 and rd < config.admm_tol * 10:
                break

    y_eq = yv[:me]
    z_in = np.maximum(yv[me : me + mi], 0.0)
    zl = np.maximum(-yv[me + mi :], 0.0)
    zu = np.maximum(yv[me + mi :], 0.0)
    res = kkt_residuals(problem, x, y_eq, z_in, zl, zu)
    scale = 1 + _data_scale(problem)
    status = QpStatus.OPTIMAL if max(res[0], res[1], res[3]) < 1e-7 * scale else QpStatus.ITER_LIMIT
    return QpSolution(status, x, problem.objective_value(x), y_eq, z_in, zl, zu, res, it)
