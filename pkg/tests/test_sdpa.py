"""SDPA sparse export and import."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marginal_selftest.sdp import export_sdpa, parse_sdpa, read_sdpa, solve, write_sdpa

from conftest import dense_block, problem


def sample_problem(maximize=False):
    third = 1.0 / 3.0
    dense = dense_block([[1.0, third], [third, 2.0]], [[[0, 1], [1, 0]], [[1, 0], [0, -np.pi]]])
    diag = dense_block(np.diag([0.0, 1.0]), [np.diag([1.0, 0.0]), np.diag([0.0, -1.0])])
    prob = problem([dense, diag], [1.0, -0.1], eq=[[1.0, 1.0]], rhs=0.25, maximize=maximize, offset=0.7)
    prob.eq_labels = ["S0|a b"]
    prob.dictionary = {0: "A0 B1", 1: "C2"}
    prob.var_ids = np.array([5, 9])
    return prob


def data_lines(text):
    return [ln for ln in text.splitlines() if ln and ln[0] not in '"*']


def assert_same(p, q):
    assert p.num_vars == q.num_vars and p.maximize == q.maximize and p.offset == q.offset
    assert np.array_equal(p.c, q.c)
    assert len(p.blocks) == len(q.blocks)
    for a, b in zip(p.blocks, q.blocks):
        assert np.array_equal(a.const, b.const)
        assert np.array_equal(a.coef.toarray(), b.coef.toarray())
    assert np.array_equal(p.eq_matrix.toarray(), q.eq_matrix.toarray())
    assert np.array_equal(p.eq_rhs, q.eq_rhs)
    assert p.eq_labels == q.eq_labels and p.dictionary == q.dictionary
    assert np.array_equal(p.var_ids, q.var_ids)


@pytest.mark.parametrize("maximize", [False, True])
def test_round_trip_is_exact(maximize):
    prob = sample_problem(maximize)
    assert_same(prob, parse_sdpa(export_sdpa(prob)))


def test_header_layout():
    lines = data_lines(export_sdpa(sample_problem()))
    assert lines[0] == "2"                       # variables
    assert lines[1] == "3"                       # blocks
    assert lines[2].split() == ["2", "-2", "-2"]  # dense, diagonal, equality block
    assert len(lines[3].split()) == 2


def test_entries_are_one_based_upper_triangle():
    for line in data_lines(export_sdpa(sample_problem()))[4:]:
        mat, blk, i, j = (int(v) for v in line.split()[:4])
        assert mat >= 0 and blk >= 1 and 1 <= i <= j


def test_seventeen_significant_digits():
    text = export_sdpa(sample_problem())
    assert "3.3333333333333331e-01" in text
    entry = data_lines(text)[4].split()[4]
    assert len(entry.split("e")[0].replace("-", "").replace(".", "")) == 17


def test_constant_sign_convention():
    # block C + sum x_i A_i becomes F_0 = -C
    lines = data_lines(export_sdpa(sample_problem()))[4:]
    zero = {tuple(int(v) for v in ln.split()[1:4]): float(ln.split()[4]) for ln in lines if ln.startswith("0 ")}
    assert zero[(1, 1, 1)] == -1.0 and zero[(1, 2, 2)] == -2.0


def test_file_round_trip_and_solution(tmp_path):
    prob = sample_problem()
    path = tmp_path / "p.dat-s"
    write_sdpa(prob, path)
    again = read_sdpa(path)
    a, b = solve(prob), solve(again)
    assert a.status == b.status
    assert a.primal_value == pytest.approx(b.primal_value, abs=1e-12)


def test_plain_sdpa_file_without_comments():
    text = "1\n1\n2\n1.0\n0 1 1 1 -1.0\n0 1 2 2 -1.0\n1 1 1 2 1.0\n"
    prob = parse_sdpa(text)
    assert not prob.maximize and prob.offset == 0.0 and len(prob.eq_rhs) == 0
    sol = solve(prob, gap_tol=1e-10, feas_tol=1e-10)
    assert sol.primal_value == pytest.approx(-1.0, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 4), m=st.integers(1, 4))
def test_round_trip_random(seed, n, m):
    rng = np.random.default_rng(seed)

    def sym():
        a = rng.normal(size=(n, n)) * (rng.random((n, n)) < 0.6)
        return a + a.T

    prob = problem([dense_block(sym(), [sym() for _ in range(m)])], rng.normal(size=m),
                   eq=rng.normal(size=(1, m)), rhs=rng.normal(size=1), offset=float(rng.normal()))
    assert_same(prob, parse_sdpa(export_sdpa(prob)))


def test_one_by_one_problem_has_five_data_lines():
    prob = problem([dense_block([[0.0]], [[[1.0]]])], [1.0])
    lines = data_lines(export_sdpa(prob))
    assert lines == ["1", "1", "-1", "1.0000000000000000e+00", "1 1 1 1 1.0000000000000000e+00"]
