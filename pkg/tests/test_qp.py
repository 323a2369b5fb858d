import numpy as np
import pytest
import scipy.optimize
import scipy.sparse as sp

from miqplan.qp import (
    QpConfig,
    QpProblem,
    QpStatus,
    kkt_residuals,
    solve_qp,
)


def dense(m):
    return None if m is None else sp.csr_matrix(np.atleast_2d(np.asarray(m, float)))


class TestTextbookProblems:
    def test_bound_constrained_scalar(self):
        # min x^2 s.t. x >= 1
        prob = QpProblem(dense([[2.0]]), [0.0], lb=np.array([1.0]))
        sol = solve_qp(prob)
        assert sol.status == QpStatus.OPTIMAL
        assert sol.primal[0] == pytest.approx(1.0, abs=1e-7)
        assert sol.objective == pytest.approx(1.0, abs=1e-7)
        assert sol.dual_lb[0] == pytest.approx(2.0, abs=1e-5)

    def test_projection_onto_halfplane(self):
        # min (x-3)^2 + (y-4)^2 s.t. x + y <= 5 -> project (3,4) onto x+y=5
        prob = QpProblem(
            dense(2 * np.eye(2)), [-6.0, -8.0], A_in=dense([[1.0, 1.0]]), b_in=[5.0]
        )
        sol = solve_qp(prob)
        assert sol.status == QpStatus.OPTIMAL
        assert sol.primal == pytest.approx([2.0, 3.0], abs=1e-6)
        assert sol.objective + 25.0 == pytest.approx(2.0, abs=1e-6)

    def test_equality_only_kkt_solve(self):
        rng = np.random.default_rng(0)
        L = rng.normal(size=(4, 4))
        Q = L @ L.T + np.eye(4)
        A = rng.normal(size=(2, 4))
        b = rng.normal(size=2)
        prob = QpProblem(dense(Q), rng.normal(size=4), A_eq=dense(A), b_eq=b)
        sol = solve_qp(prob)
        assert sol.status == QpStatus.OPTIMAL
        assert sol.kkt_residuals[0] < 1e-10
        assert sol.kkt_residuals[1] < 1e-10

    def test_unconstrained(self):
        prob = QpProblem(dense(2 * np.eye(2)), [-2.0, -4.0])
        sol = solve_qp(prob)
        assert sol.primal == pytest.approx([1.0, 2.0], abs=1e-8)


class TestInfeasibility:
    def test_contradictory_bounds(self):
        prob = QpProblem(dense([[2.0]]), [0.0], lb=np.array([2.0]), ub=np.array([1.0]))
        sol = solve_qp(prob)
        assert sol.status == QpStatus.INFEASIBLE

    def test_disjoint_rows_certified(self):
        # x <= 0 and x >= 1 expressed as inequality rows
        prob = QpProblem(
            dense([[2.0]]), [0.0],
            A_in=dense([[1.0], [-1.0]]), b_in=[0.0, -1.0],
        )
        sol = solve_qp(prob)
        assert sol.status == QpStatus.INFEASIBLE
        assert sol.certificate is not None
        assert sol.certificate["violation"] > 0.5  # gap between the halflines

    def test_infeasible_box_vs_equality(self):
        prob = QpProblem(
            dense(np.eye(2)), [0.0, 0.0],
            A_eq=dense([[1.0, 1.0]]), b_eq=[10.0],
            lb=np.zeros(2), ub=np.ones(2),
        )
        sol = solve_qp(prob)
        assert sol.status == QpStatus.INFEASIBLE


class TestRandomCrossCheck:
    @pytest.mark.parametrize("seed", range(8))
    def test_against_slsqp(self, seed):
        rng = np.random.default_rng(seed)
        n, m = 6, 4
        L = rng.normal(size=(n, n))
        Q = L @ L.T + 0.5 * np.eye(n)
        c = rng.normal(size=n)
        A = rng.normal(size=(m, n))
        x_feas = rng.normal(size=n) * 0.5
        b = A @ x_feas + rng.uniform(0.1, 1.0, size=m)  # strictly feasible point
        lb, ub = np.full(n, -5.0), np.full(n, 5.0)

        prob = QpProblem(dense(Q), c, A_in=dense(A), b_in=b, lb=lb, ub=ub)
        sol = solve_qp(prob)
        assert sol.status == QpStatus.OPTIMAL

        ref = scipy.optimize.minimize(
            lambda x: 0.5 * x @ Q @ x + c @ x,
            x_feas,
            jac=lambda x: Q @ x + c,
            constraints=[{"type": "ineq", "fun": lambda x: b - A @ x}],
            bounds=list(zip(lb, ub)),
            method="SLSQP",
            options={"maxiter": 200, "ftol": 1e-12},
        )
        assert sol.objective == pytest.approx(ref.fun, abs=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_kkt_recomputation_independent(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = 8
        Q = np.diag(rng.uniform(0.1, 3.0, size=n))
        c = rng.normal(size=n)
        A_eq = rng.normal(size=(2, n))
        b_eq = A_eq @ rng.normal(size=n)
        A_in = rng.normal(size=(5, n))
        b_in = A_in @ rng.normal(size=n) + rng.uniform(0.5, 2, size=5)
        prob = QpProblem(dense(Q), c, dense(A_eq), b_eq, dense(A_in), b_in,
                         np.full(n, -10.0), np.full(n, 10.0))
        sol = solve_qp(prob)
        assert sol.status == QpStatus.OPTIMAL
        res = kkt_residuals(prob, sol.primal, sol.dual_eq, sol.dual_in,
                            sol.dual_lb, sol.dual_ub)
        assert max(res) < 1e-6
        assert res == sol.kkt_residuals


class TestLpMode:
    def test_pure_lp(self):
        # min -x - y s.t. x + 2y <= 4, box [0, 3]
        prob = QpProblem(None, [-1.0, -1.0], A_in=dense([[1.0, 2.0]]), b_in=[4.0],
                         lb=np.zeros(2), ub=np.full(2, 3.0))
        sol = solve_qp(prob)
        assert sol.status == QpStatus.OPTIMAL
        assert sol.objective == pytest.approx(-3.5, abs=1e-6)  # x=3, y=0.5


class TestAdmmEngine:
    def test_agrees_with_interior_point(self):
        rng = np.random.default_rng(9)
        n = 5
        Q = np.diag(rng.uniform(0.5, 2.0, size=n))
        c = rng.normal(size=n)
        A = rng.normal(size=(3, n))
        b = A @ rng.normal(size=n) + 1.0
        prob = QpProblem(dense(Q), c, A_in=dense(A), b_in=b,
                         lb=np.full(n, -4.0), ub=np.full(n, 4.0))
        ip = solve_qp(prob)
        fo = solve_qp(prob, config=QpConfig(engine="admm"))
        assert ip.status == QpStatus.OPTIMAL
        assert fo.objective == pytest.approx(ip.objective, abs=1e-4)
