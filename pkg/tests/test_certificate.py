"""Independent verification of solver output."""
from __future__ import annotations

import copy

import numpy as np
import pytest

from marginal_selftest.sdp import TemplateMismatch, exposing_certificate, extract_dual_inequality, solve, \
    verify_certificate
from marginal_selftest.sdp.certificate import family_sizes

from conftest import dense_block, problem

E12 = [[0.0, 1.0], [1.0, 0.0]]


@pytest.fixture
def solved():
    prob = problem([dense_block(np.eye(2), [E12])], [1.0])
    return prob, solve(prob, gap_tol=1e-10, feas_tol=1e-10)


def test_honest_solution_passes(solved):
    prob, sol = solved
    report = verify_certificate(prob, sol)
    assert report.passed, report.failures
    assert report.certified_bound <= -1.0 + 1e-9
    assert report.certified_bound == pytest.approx(-1.0, abs=1e-7)
    assert report.to_json()["passed"] is True


def test_infeasible_primal_is_caught(solved):
    prob, sol = solved
    bad = copy.deepcopy(sol)
    bad.x = np.array([-1.5])
    assert any("eigenvalue" in f for f in verify_certificate(prob, bad).failures)


def test_indefinite_dual_is_caught(solved):
    prob, sol = solved
    bad = copy.deepcopy(sol)
    bad.dual_blocks = [np.diag([1.0, -1.0])]
    failures = verify_certificate(prob, bad).failures
    assert any("dual block" in f for f in failures)


def test_reported_gap_is_checked(solved):
    prob, sol = solved
    bad = copy.deepcopy(sol)
    bad.dual_value = sol.dual_value - 0.5
    assert any("relative gap" in f for f in verify_certificate(prob, bad).failures)


def test_equality_residual_is_checked():
    lp = dense_block(np.zeros((2, 2)), [np.diag(e) for e in np.eye(2)])
    prob = problem([lp], [1.0, 2.0], eq=[[1.0, 1.0]], rhs=1.0)
    sol = solve(prob, gap_tol=1e-10, feas_tol=1e-10)
    assert verify_certificate(prob, sol).passed
    bad = copy.deepcopy(sol)
    bad.x = sol.x + 0.1
    assert any("equality" in f for f in verify_certificate(prob, bad).failures)


def test_bound_survives_a_perturbed_dual(solved):
    prob, sol = solved
    bad = copy.deepcopy(sol)
    bad.dual_blocks = [sol.dual_blocks[0] * 1.01]
    report = verify_certificate(prob, bad)
    # the stationarity residual is paid for, so the bound stays valid
    assert report.certified_bound <= -1.0 + 1e-9


def test_maximize_bound_is_an_upper_bound():
    prob = problem([dense_block(np.eye(2), [E12])], [1.0], maximize=True)
    report = verify_certificate(prob, solve(prob, gap_tol=1e-10, feas_tol=1e-10))
    assert report.passed and 1.0 - 1e-9 <= report.certified_bound <= 1.0 + 1e-6


def test_exposing_certificate_without_interior():
    # [[x, y], [y, 0]] >= 0 with x = 1: no interior, exposing direction on y
    blk = dense_block(np.zeros((2, 2)), [[[1, 0], [0, 0]], E12])
    prob = problem([blk], [0.0, 1.0], eq=[[1.0, 0.0]], rhs=1.0)
    cert = exposing_certificate(prob)
    Y = cert.dual_blocks[0]
    assert abs(cert.primal_value) <= 1e-6
    assert np.linalg.eigvalsh(Y)[0] >= -1e-8
    assert np.trace(Y) == pytest.approx(1.0, abs=1e-6)
    # A^*(Y) + E^T mu = 0
    res = prob.blocks[0].adjoint(Y) + prob.eq_matrix.T @ cert.multipliers
    assert np.max(np.abs(res)) <= 1e-6


def test_family_sizes_for_three_parties():
    sizes = family_sizes()
    assert sizes["S0"] == 3 and sizes["T00"] == 3 and sizes["T01"] == 6
    assert len(sizes) == 9


def test_template_mismatch_on_unlabeled_rows(solved):
    prob, sol = solved
    with pytest.raises(TemplateMismatch):
        extract_dual_inequality(prob, sol)
    with pytest.raises(TemplateMismatch):
        family_sizes("cyclic")
