"""Monomial canonicalization, exact coefficients and party permutations."""
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marginal_selftest.algebra import (IDENTITY, SQRT2, OperatorPolynomial, PermutationGroup, QSqrt2, Scenario,
                                       adjoint, apply_permutation, canonicalize, compose, evaluate_poly,
                                       from_cycles, hermitian_key, invert, monomial_matrix, multiply,
                                       parse_monomial)
from marginal_selftest.checks import random_involution

letters = st.tuples(st.integers(0, 2), st.integers(0, 2))
words = st.lists(letters, max_size=8)


@pytest.mark.parametrize("raw,expected", [
    ([(0, 0), (0, 0)], "1"),
    ([(1, 0), (0, 1)], "A1 B0"),
    ([(0, 1), (0, 0), (0, 0), (0, 1), (1, 2)], "B2"),
    ([(0, 0), (1, 1), (0, 0)], "B1"),
    ([(0, 0), (0, 1), (0, 0)], "A0 A1 A0"),
])
def test_canonicalize_examples(raw, expected):
    assert str(canonicalize(raw)) == expected


@given(words)
def test_canonical_form_is_idempotent(w):
    u = canonicalize(w)
    assert canonicalize(u.word) == u


@given(words)
def test_canonical_form_has_no_adjacent_repeats(w):
    u = canonicalize(w)
    assert all(a != b for a, b in zip(u.word, u.word[1:]))
    assert [l.party for l in u.word] == sorted(l.party for l in u.word)


@given(words)
def test_adjoint_is_an_involution(w):
    u = canonicalize(w)
    assert adjoint(adjoint(u)) == u


@given(words, words)
def test_adjoint_reverses_products(a, b):
    u, v = canonicalize(a), canonicalize(b)
    assert adjoint(multiply(u, v)) == multiply(adjoint(v), adjoint(u))


@given(words)
def test_inverse_is_adjoint(w):
    u = canonicalize(w)
    assert multiply(adjoint(u), u) == IDENTITY


@given(words, words, words)
def test_multiplication_is_associative(a, b, c):
    u, v, w = canonicalize(a), canonicalize(b), canonicalize(c)
    assert multiply(multiply(u, v), w) == multiply(u, multiply(v, w))


@given(words)
def test_parse_round_trip(w):
    u = canonicalize(w)
    assert parse_monomial(str(u)) == u


@given(words)
def test_hermitian_key_is_shared(w):
    u = canonicalize(w)
    assert hermitian_key(u) == hermitian_key(adjoint(u))


@settings(max_examples=40, deadline=None)
@given(words, st.integers(0, 2 ** 31))
def test_canonical_form_matches_matrices(w, seed):
    rng = np.random.default_rng(seed)
    realization = [[random_involution(2, rng) for _ in range(3)] for _ in range(3)]
    raw = [np.eye(8, dtype=complex)]
    for p, m in w:
        single = canonicalize([(p, m)])
        raw.append(monomial_matrix(single, realization))
    prod = raw[0]
    for mat in raw[1:]:
        prod = prod @ mat
    assert np.allclose(prod, monomial_matrix(canonicalize(w), realization), atol=1e-10)


def test_qsqrt2_arithmetic_is_exact():
    half = QSqrt2(Fraction(1, 2))
    assert SQRT2 * SQRT2 == 2
    assert (SQRT2 / 2) * SQRT2 == 1
    assert (half + SQRT2) - SQRT2 == half
    assert float(SQRT2) == pytest.approx(2 ** 0.5)
    with pytest.raises(ZeroDivisionError):
        SQRT2 / 0


def test_polynomial_algebra():
    a0 = OperatorPolynomial.letter(0, 0)
    a1 = OperatorPolynomial.letter(0, 1)
    p = (a0 + a1) * (a0 + a1)
    assert p.coefficient(IDENTITY) == 2
    assert p.coefficient(canonicalize([(0, 0), (0, 1)])) == 1
    assert p == p.adjoint()
    assert (p - p).terms == {}


def test_polynomial_evaluation_matches_dense():
    rng = np.random.default_rng(3)
    realization = [[random_involution(2, rng) for _ in range(2)] for _ in range(3)]
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    p = OperatorPolynomial.letter(0, 0) * OperatorPolynomial.letter(1, 1) + SQRT2 * OperatorPolynomial.letter(2, 0)
    dense = np.kron(np.kron(realization[0][0], realization[1][1]), np.eye(2)) \
        + 2 ** 0.5 * np.kron(np.eye(4), realization[2][0])
    assert evaluate_poly(p, realization, psi) == pytest.approx(np.vdot(psi, dense @ psi).real)


def test_evaluate_poly_checks_dimensions():
    with pytest.raises(ValueError):
        evaluate_poly(OperatorPolynomial.constant(1), [[np.eye(2)]] * 3, np.ones(4) / 2)


def test_from_cycles_convention():
    # (abc): operators held by B move to A, so f(Z_A, X_B, D_C) -> f(X_A, D_B, Z_C)
    g = from_cycles("(abc)", 3)
    u = canonicalize([(0, 0), (1, 1), (2, 2)])
    assert apply_permutation(g, u) == canonicalize([(0, 1), (1, 2), (2, 0)])
    assert from_cycles("(ab)", 3) == (1, 0, 2)


@given(st.permutations(range(4)), st.permutations(range(4)))
def test_compose_and_invert(g, h):
    g, h = tuple(g), tuple(h)
    assert compose(g, invert(g)) == tuple(range(4))
    u = canonicalize([(0, 0), (1, 1), (3, 2)])
    assert apply_permutation(compose(g, h), u) == apply_permutation(g, apply_permutation(h, u))


@pytest.mark.parametrize("n,order", [(3, 6), (4, 24)])
def test_symmetric_group_order(n, order):
    assert len(PermutationGroup.symmetric(n)) == order


def test_cyclic_group_and_generated():
    assert len(PermutationGroup.cyclic(3)) == 3
    assert len(PermutationGroup.generated([(1, 0, 2)], 3)) == 2


def test_group_must_close():
    with pytest.raises(ValueError):
        PermutationGroup([(0, 1, 2), (1, 2, 0)])


def test_representative_is_orbit_minimum():
    g = PermutationGroup.symmetric(3)
    u = canonicalize([(2, 0)])
    assert g.representative(u) == canonicalize([(0, 0)])


def test_group_average_is_invariant():
    g = PermutationGroup.symmetric(3)
    p = g.average(OperatorPolynomial.letter(0, 0))
    for h in g:
        assert p.permute(h) == p


def test_scenario_validation():
    sc = Scenario(2, ("Z", "X"))
    sc.validate(canonicalize([(1, 1)]))
    with pytest.raises(ValueError):
        sc.validate(canonicalize([(2, 0)]))
    assert sc.describe(canonicalize([(0, 0), (1, 1)])) == "Z_A X_B"
