"""Interior-point solver on problems with known optima."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marginal_selftest.sdp import SdpSolution, solve, verify_certificate

from conftest import dense_block, problem

TIGHT = dict(gap_tol=1e-10, feas_tol=1e-10)
ABS_TOL = 1e-9

E12 = [[0.0, 1.0], [1.0, 0.0]]


def off_diagonal_problem(maximize):
    """Extremize ``x`` subject to ``[[1, x], [x, 1]] >= 0``; optimum is -1 or +1."""
    return problem([dense_block(np.eye(2), [E12])], [1.0], maximize=maximize)


def analytic_cases():
    """(name, problem, optimum) triples with closed-form optima."""
    cases = [("one by one", problem([dense_block([[0.0]], [[[1.0]]])], [1.0]), 0.0),
             ("min off-diagonal", off_diagonal_problem(False), -1.0),
             ("max off-diagonal", off_diagonal_problem(True), 1.0)]
    # min x1 + x2 with [[x1, 1], [1, x2]] >= 0: x1 = x2 = 1
    blk = dense_block(E12, [[[1, 0], [0, 0]], [[0, 0], [0, 1]]])
    cases.append(("hyperbolic corner", problem([blk], [1.0, 1.0]), 2.0))
    # linear program on the simplex: min 3x1 + x2 + 2x3, x >= 0, sum x = 1
    lp = dense_block(np.zeros((3, 3)), [np.diag(e) for e in np.eye(3)])
    cases.append(("simplex LP", problem([lp], [3.0, 1.0, 2.0], eq=[1, 1, 1], rhs=1.0), 1.0))
    # max trace(rho M) over density matrices equals the largest eigenvalue of M
    M = np.array([[2.0, 1.0, 0.0], [1.0, 0.0, 0.5], [0.0, 0.5, -1.0]])
    cases.append(("max eigenvalue via scalar bound", max_eigenvalue_problem(M), float(np.linalg.eigvalsh(M)[-1])))
    # objective offset is carried through
    cases.append(("offset", problem([dense_block(np.eye(2), [E12])], [1.0], offset=3.5), 2.5))
    return cases


def max_eigenvalue_problem(M):
    """``min t`` subject to ``t I - M >= 0``."""
    n = M.shape[0]
    return problem([dense_block(-M, [np.eye(n)])], [1.0])


@pytest.mark.parametrize("name,prob,optimum", analytic_cases(), ids=[c[0] for c in analytic_cases()])
def test_analytic_optimum(name, prob, optimum):
    sol = solve(prob, **TIGHT)
    assert sol.status == SdpSolution.OPTIMAL
    assert abs(sol.primal_value - optimum) <= ABS_TOL
    assert abs(sol.dual_value - optimum) <= ABS_TOL
    assert verify_certificate(prob, sol, feas_tol=1e-9, gap_tol=1e-9).passed


def test_maximize_reports_original_sense():
    sol = solve(off_diagonal_problem(True), **TIGHT)
    assert sol.primal_value > 0 and sol.x[0] == pytest.approx(1.0, abs=ABS_TOL)
    report = verify_certificate(off_diagonal_problem(True), sol)
    # certified bound of a maximization is an upper bound
    assert report.certified_bound >= 1.0 - ABS_TOL


def test_dual_certificate_is_feasible():
    prob = off_diagonal_problem(False)
    sol = solve(prob, **TIGHT)
    Y = sol.dual_blocks[0]
    assert np.linalg.eigvalsh(Y)[0] >= -1e-9
    # stationarity: <A_1, Y> = c_1
    assert float(prob.blocks[0].adjoint(Y)[0]) == pytest.approx(1.0, abs=1e-8)
    # dual value -<C, Y> equals the optimum
    assert -float(np.vdot(prob.blocks[0].const, Y)) == pytest.approx(-1.0, abs=ABS_TOL)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 6))
def test_random_max_eigenvalue(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    M = A + A.T
    sol = solve(max_eigenvalue_problem(M), **TIGHT)
    assert sol.ok
    assert abs(sol.primal_value - np.linalg.eigvalsh(M)[-1]) <= ABS_TOL * (1 + np.abs(M).max())


def test_inconsistent_equalities_are_infeasible():
    # x = 2 contradicts [[1, x], [x, 1]] >= 0
    prob = problem([dense_block(np.eye(2), [E12])], [1.0], eq=[1.0], rhs=2.0)
    assert solve(prob, **TIGHT).status == SdpSolution.INFEASIBLE


def test_unbounded_problem_is_flagged():
    # min -x subject to x >= 0 has no finite optimum; the empty dual is reported
    prob = problem([dense_block([[0.0]], [[[1.0]]])], [-1.0])
    assert solve(prob, **TIGHT).status == SdpSolution.INFEASIBLE


def test_dependent_equalities_are_dropped():
    lp = dense_block(np.zeros((3, 3)), [np.diag(e) for e in np.eye(3)])
    eq = [[1, 1, 1], [2, 2, 2]]
    prob = problem([lp], [3.0, 1.0, 2.0], eq=eq, rhs=[1.0, 2.0])
    sol = solve(prob, **TIGHT)
    assert sol.ok and abs(sol.primal_value - 1.0) <= ABS_TOL


def test_contradictory_equalities_raise():
    lp = dense_block(np.zeros((2, 2)), [np.diag(e) for e in np.eye(2)])
    prob = problem([lp], [1.0, 1.0], eq=[[1, 1], [2, 2]], rhs=[1.0, 3.0])
    with pytest.raises(ValueError):
        solve(prob)


def test_facial_reduction_recovers_optimum_without_interior():
    # [[x, y], [y, 0]] >= 0 with x = 1 forces y = 0; no strictly feasible point
    blk = dense_block(np.zeros((2, 2)), [[[1, 0], [0, 0]], E12])
    prob = problem([blk], [0.0, 1.0], eq=[[1.0, 0.0]], rhs=1.0)
    sol = solve(prob, facial_reduction=True, **TIGHT)
    assert sol.ok
    assert abs(sol.primal_value) <= ABS_TOL
    assert sol.face is not None and sol.face.num_extra >= 1


def test_deterministic():
    prob = max_eigenvalue_problem(np.array([[1.0, 2.0], [2.0, -3.0]]))
    a, b = solve(prob, **TIGHT), solve(prob, **TIGHT)
    assert a.iterations == b.iterations
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.dual_blocks[0], b.dual_blocks[0])


def test_iteration_limit_returns_best_iterate():
    sol = solve(max_eigenvalue_problem(np.diag([1.0, 2.0, 3.0])), max_iters=2)
    assert sol.status == SdpSolution.MAX_ITERATIONS
    assert np.isfinite(sol.primal_value) and sol.iterations == 2


def test_one_by_one_block():
    prob = problem([dense_block([[0.0]], [[[1.0]]])], [1.0])
    sol = solve(prob, **TIGHT)
    assert sol.ok and abs(sol.primal_value) <= ABS_TOL
    report = verify_certificate(prob, sol)
    assert report.passed and report.stationarity <= 1e-12 and report.equality_residual == 0.0


def test_analytic_dual_of_hyperbolic_corner():
    # min x1 + x2, [[x1, 1], [1, x2]] >= 0; the dual optimum is [[1, -1], [-1, 1]]
    blk = dense_block(E12, [[[1, 0], [0, 0]], [[0, 0], [0, 1]]])
    sol = solve(problem([blk], [1.0, 1.0]), **TIGHT)
    assert np.allclose(sol.dual_blocks[0], [[1.0, -1.0], [-1.0, 1.0]], atol=1e-8)
    assert np.allclose(sol.x, [1.0, 1.0], atol=1e-6)


def test_constant_objective_without_constraints():
    prob = problem([], [0.0, 0.0], offset=0.375)
    sol = solve(prob, **TIGHT)
    assert sol.ok and sol.primal_value == pytest.approx(0.375, abs=1e-12)
