"""Mixed nonnegative least squares, capped-simplex projection, and the
inequality-constrained grid solver."""

import numpy as np
import pytest

from tcreg import (
    IneqLsProblem,
    kkt_report,
    MixedLsProblem,
    project_capped_simplex,
    solve_ls_linear_ineq,
    solve_mixed_nnls,
)

from _oracles import mixed_nnls_bruteforce


def nofree(n):
    return np.zeros((n, 0))


def random_problem(rng, cap=False):
    n = int(rng.integers(3, 14))
    m_f = int(rng.integers(0, 4))
    m_p = int(rng.integers(1, 11))
    A_free = rng.normal(size=(n, m_f))
    A_pos = np.abs(rng.normal(size=(n, m_p)))
    if rng.uniform() < 0.3:
        A_pos[:, rng.integers(m_p)] = 0.0  # degenerate all-zero column
    y = rng.normal(size=n)
    V = float(rng.uniform(0.1, 2.0)) if cap else None
    return MixedLsProblem(A_free=A_free, A_pos=A_pos, y=y, V_cap=V)


class TestMixedNnls:
    def test_interior_solution(self):
        p = MixedLsProblem(nofree(2), np.array([[1.0], [1.0]]), np.array([1.0, 2.0]))
        s = solve_mixed_nnls(p)
        assert s.beta_pos[0] == pytest.approx(1.5, abs=1e-9)
        assert s.converged

    def test_boundary_solution(self):
        p = MixedLsProblem(nofree(2), np.array([[1.0], [1.0]]), np.array([-1.0, -2.0]))
        s = solve_mixed_nnls(p)
        assert s.beta_pos[0] == 0.0

    def test_two_column_matches_enumeration(self):
        A = np.array([[1.0, 1.0], [0.0, 1.0]])
        y = np.array([1.0, -1.0])
        s = solve_mixed_nnls(MixedLsProblem(nofree(2), A, y))
        fitted, beta = mixed_nnls_bruteforce(nofree(2), A, y)
        np.testing.assert_allclose(A @ s.beta_pos, fitted, atol=1e-8)

    def test_oracle_equivalence_uncapped(self):
        rng = np.random.default_rng(31)
        for _ in range(40):
            p = random_problem(rng)
            s = solve_mixed_nnls(p)
            assert s.converged
            fitted, _ = mixed_nnls_bruteforce(p.A_free, p.A_pos, p.y)
            got = p.A_free @ s.beta_free + p.A_pos @ s.beta_pos
            np.testing.assert_allclose(got, fitted, atol=1e-6)

    def test_oracle_equivalence_capped(self):
        rng = np.random.default_rng(32)
        for _ in range(40):
            p = random_problem(rng, cap=True)
            s = solve_mixed_nnls(p)
            assert s.converged
            assert s.beta_pos.sum() <= p.V_cap + 1e-12
            fitted, _ = mixed_nnls_bruteforce(p.A_free, p.A_pos, p.y, V_cap=p.V_cap)
            got = p.A_free @ s.beta_free + p.A_pos @ s.beta_pos
            np.testing.assert_allclose(got, fitted, atol=1e-6)

    def test_objective_log_monotone(self):
        rng = np.random.default_rng(33)
        for _ in range(20):
            p = random_problem(rng, cap=bool(rng.integers(2)))
            s = solve_mixed_nnls(p)
            log = np.asarray(s.objective_log)
            assert np.all(np.diff(log) <= 1e-12 * (1 + np.abs(log[:-1])))
            assert s.objective <= 0.5 * p.y @ p.y + 1e-12

    def test_converged_kkt_within_ten_tol(self):
        rng = np.random.default_rng(34)
        tol = 1e-8
        for _ in range(20):
            p = random_problem(rng, cap=bool(rng.integers(2)))
            s = solve_mixed_nnls(p, tol=tol)
            assert s.converged
            rep = kkt_report(p, s)
            worst = max(rep["stationarity_free"], rep["complementarity_worst"],
                        rep["feasibility_worst"])
            assert worst <= 10 * tol * (1 + np.linalg.norm(p.y))

    def test_nonnegativity_exact(self):
        rng = np.random.default_rng(35)
        for _ in range(10):
            p = random_problem(rng)
            s = solve_mixed_nnls(p)
            assert np.all(s.beta_pos >= 0.0)


class TestKktReport:
    def test_exact_solution_residuals(self):
        p = MixedLsProblem(nofree(2), np.array([[1.0], [1.0]]), np.array([1.0, 2.0]))
        s = solve_mixed_nnls(p, tol=1e-12)
        rep = kkt_report(p, s)
        assert max(rep.values()) <= 1e-10

    def test_perturbed_solution_flagged(self):
        A_free = np.array([[1.0], [1.0], [1.0]])
        p = MixedLsProblem(A_free, nofree(3), np.array([1.0, 2.0, 3.0]))
        s = solve_mixed_nnls(p)
        bad = type(s)(
            beta_free=s.beta_free + 0.1,
            beta_pos=s.beta_pos,
            objective=s.objective,
            kkt_residual=s.kkt_residual,
            iterations=s.iterations,
            converged=s.converged,
            objective_log=s.objective_log,
        )
        rep = kkt_report(p, bad)
        assert rep["stationarity_free"] > 0.01

    def test_boundary_solution_report(self):
        p = MixedLsProblem(nofree(2), np.array([[1.0], [1.0]]), np.array([-1.0, -2.0]))
        s = solve_mixed_nnls(p)
        rep = kkt_report(p, s)
        assert rep["complementarity_worst"] == pytest.approx(0.0, abs=1e-12)
        assert rep["feasibility_worst"] == 0.0


class TestProjectCappedSimplex:
    def test_already_feasible(self):
        np.testing.assert_array_equal(
            project_capped_simplex(np.array([0.5, 0.3]), 1.0), [0.5, 0.3])

    def test_clamp_only(self):
        np.testing.assert_array_equal(
            project_capped_simplex(np.array([-1.0, -2.0]), 5.0), [0.0, 0.0])

    def test_water_filling(self):
        np.testing.assert_allclose(
            project_capped_simplex(np.array([2.0, -1.0]), 1.0), [1.0, 0.0])

    def test_idempotent_and_nonexpansive(self):
        rng = np.random.default_rng(36)
        for _ in range(50):
            m = int(rng.integers(1, 12))
            V = float(rng.uniform(0.0, 3.0))
            u = rng.normal(size=m) * 2
            v = rng.normal(size=m) * 2
            Pu = project_capped_simplex(u, V)
            Pv = project_capped_simplex(v, V)
            assert np.all(Pu >= 0) and Pu.sum() <= V + 1e-12
            np.testing.assert_allclose(project_capped_simplex(Pu, V), Pu, atol=1e-12)
            assert np.linalg.norm(Pu - Pv) <= np.linalg.norm(u - v) + 1e-12


class TestIneqLs:
    def test_inactive_constraints_reproduce_ols(self):
        rng = np.random.default_rng(37)
        M = rng.normal(size=(8, 3))
        theta_true = rng.normal(size=3)
        y = M @ theta_true
        # constraints already satisfied strictly at the OLS solution
        C = -np.eye(3) if np.all(theta_true > 0) else np.eye(3) * np.where(theta_true > 0, -1.0, 1.0)
        sol = solve_ls_linear_ineq(IneqLsProblem(M=M, y=y, C=C))
        np.testing.assert_allclose(M @ sol.theta, y, atol=1e-6)

    def test_single_halfspace_projection(self):
        prob = IneqLsProblem(M=np.eye(3), y=np.array([0.0, 0.0, 1.0]),
                             C=np.array([[1.0, -2.0, 1.0]]))
        sol = solve_ls_linear_ineq(prob)
        np.testing.assert_allclose(sol.theta, [-1 / 6, 1 / 3, 5 / 6], atol=1e-7)

    def test_empty_constraint_set_interpolates(self):
        y = np.array([0.3, -0.7, 2.0, 0.1])
        prob = IneqLsProblem(M=np.eye(4), y=y, C=np.zeros((0, 4)))
        sol = solve_ls_linear_ineq(prob)
        np.testing.assert_allclose(sol.theta, y, atol=1e-12)
        assert sol.converged

    def test_rho_invariance(self):
        rng = np.random.default_rng(38)
        M = np.eye(5)
        y = np.sort(rng.normal(size=5))[::-1].copy()  # decreasing, stresses constraints
        u = np.linspace(0, 1, 5)
        rows = []
        for i in range(3):
            row = np.zeros(5)
            row[i], row[i + 1], row[i + 2] = 1.0, -2.0, 1.0
            rows.append(row)
        prob = IneqLsProblem(M=M, y=y, C=np.array(rows))
        fits = []
        for rho in (0.1, 1.0, 10.0):
            sol = solve_ls_linear_ineq(prob, tol=1e-10, rho=rho)
            assert sol.converged
            fits.append(M @ sol.theta)
        assert np.max(np.abs(fits[0] - fits[1])) <= 1e-6
        assert np.max(np.abs(fits[1] - fits[2])) <= 1e-6

    def test_nonconvergence_flagged_not_raised(self):
        prob = IneqLsProblem(M=np.eye(3), y=np.array([0.0, 0.0, 1.0]),
                             C=np.array([[1.0, -2.0, 1.0]]))
        sol = solve_ls_linear_ineq(prob, tol=1e-14, max_iter=2)
        assert not sol.converged

    def test_ridge_shrinks_solution(self):
        M = np.eye(2)
        y = np.array([1.0, 1.0])
        loose = solve_ls_linear_ineq(IneqLsProblem(M=M, y=y, C=np.zeros((0, 2))))
        tight = solve_ls_linear_ineq(IneqLsProblem(M=M, y=y, C=np.zeros((0, 2)), ridge=1.0))
        assert np.linalg.norm(tight.theta) < np.linalg.norm(loose.theta)

    def test_degenerate_grid_engages_direct_subsolver(self):
        # ten observations pinning ten of a hundred grid nodes, with
        # slope-monotonicity rows over unevenly spaced breakpoints on
        # both axes: G is rank deficient, most binding rows carry a zero
        # multiplier, and the splitting iteration alone never meets the
        # tolerance
        rng = np.random.default_rng(100)
        g = 10
        u1 = np.sort(rng.uniform(size=g))
        u2 = np.sort(rng.uniform(size=g))
        cells = rng.choice(g * g, size=g, replace=False)
        ii, jj = cells // g, cells % g
        M = np.zeros((g, g * g))
        M[np.arange(g), cells] = 1.0
        y = -((u1[ii] - 0.4) ** 2 + (u2[jj] - 0.4) ** 2) + 0.05 * rng.normal(size=g)
        rows = []
        for i in range(g):
            for j in range(g - 2):
                for u, at in ((u1, lambda t: t * g + i), (u2, lambda t: i * g + t)):
                    a, b, c = u[j], u[j + 1], u[j + 2]
                    row = np.zeros(g * g)
                    row[at(j)] = 1.0 / (b - a)
                    row[at(j + 1)] = -1.0 / (b - a) - 1.0 / (c - b)
                    row[at(j + 2)] = 1.0 / (c - b)
                    rows.append(row)
        prob = IneqLsProblem(M=M, y=y, C=np.array(rows))
        sol = solve_ls_linear_ineq(prob)
        assert sol.converged and sol.polished
        # feasibility rechecked independently of the solver's report
        assert float(np.max(prob.C @ sol.theta)) <= 1e-7
        # a budget below the engagement threshold leaves the raw
        # splitting path, which does not reach the tolerance here
        raw = solve_ls_linear_ineq(prob, max_iter=199)
        assert not raw.polished
        assert not raw.converged
