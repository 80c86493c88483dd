"""Moment bases, symmetrized structures, fidelity functionals and assembly."""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marginal_selftest import relaxation as rx
from marginal_selftest.algebra import IDENTITY, OperatorPolynomial, PermutationGroup, Scenario, canonicalize
from marginal_selftest.bell import TRANSLATION_INVARIANT_INEQUALITY
from marginal_selftest.checks import random_involution
from marginal_selftest.experiments import ExperimentConfig, w3_setup
from marginal_selftest.oracle import SIGMA_X, SIGMA_Z, ideal_behavior, make_state, swap_circuit_reference


@pytest.fixture(scope="module")
def w3():
    return w3_setup(ExperimentConfig("w3"))


@pytest.fixture(scope="module")
def w3_plain():
    return w3_setup(ExperimentConfig("w3", symmetrize=False))


def ideal_realization(n=3):
    return [[SIGMA_Z, SIGMA_X, (SIGMA_Z + SIGMA_X) / np.sqrt(2)]] * n


def test_local_level_one_size():
    assert len(rx.local_level_one(Scenario(3))) == 4 ** 3
    assert len(rx.local_level_one(Scenario(4), max_parties=2)) == 1 + 4 * 3 + 6 * 9


def test_default_basis_covers_fidelity_monomials(w3_plain):
    st_ = w3_plain.structure
    for mono in w3_plain.functional.polynomial.monomials():
        assert st_.lookup(mono) is not None


def test_symmetrized_basis_is_closed(w3):
    basis = set(w3.structure.basis.monomials)
    for u in basis:
        for g in PermutationGroup.symmetric(3):
            from marginal_selftest.algebra import apply_permutation
            assert apply_permutation(g, u) in basis


def test_symmetrization_reduces_variables(w3, w3_plain):
    assert w3.structure.num_vars < w3_plain.structure.num_vars
    assert w3.structure.gamma.shape == w3_plain.structure.gamma.shape


def test_basis_must_start_with_identity():
    with pytest.raises(ValueError):
        rx.MonomialBasis(Scenario(1), [canonicalize([(0, 0)])])


def test_manifest_round_trip(w3, tmp_path):
    path = tmp_path / "m.json"
    rx.write_manifest(w3.structure, path)
    data = json.loads(path.read_text())
    basis = rx.MonomialBasis.from_manifest(data)
    assert basis.monomials == w3.structure.basis.monomials
    assert data["num_variables"] == w3.structure.num_vars


@pytest.mark.parametrize("fixture", ["w3", "w3_plain"])
def test_ideal_moment_matrix_is_psd(fixture, request):
    setup = request.getfixturevalue(fixture)
    values = setup.structure.realization_values(ideal_realization(), make_state("W3"))
    gamma = setup.structure.block_matrices(values)[0]
    assert np.linalg.eigvalsh(gamma)[0] > -1e-10
    assert setup.functional.evaluate(values) == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_random_realization_moments(seed):
    setup = w3_setup(ExperimentConfig("w3", symmetrize=False))
    rng = np.random.default_rng(seed)
    z = [random_involution(2, rng) for _ in range(3)]
    x = [random_involution(2, rng) for _ in range(3)]
    d = [random_involution(2, rng) for _ in range(3)]
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    real = [[z[p], x[p], d[p]] for p in range(3)]
    values = setup.structure.realization_values(real, psi)
    gamma = setup.structure.block_matrices(values)[0]
    assert np.linalg.eigvalsh(gamma)[0] > -1e-9
    ref = swap_circuit_reference(psi, z, x, make_state("W3"))
    assert setup.functional.evaluate(values) == pytest.approx(ref, abs=1e-9)


def test_swap_kraus_blocks_sum_to_identity():
    z = OperatorPolynomial.letter(0, 0)
    x = OperatorPolynomial.letter(0, 1)
    k = rx.swap_kraus(z, x)
    assert k[(0, 0)] + k[(1, 1)] == OperatorPolynomial.constant(1)


def test_missing_monomial_error(w3):
    with pytest.raises(rx.MissingMonomialError):
        w3.structure.var(canonicalize([(0, 0), (0, 1), (0, 2), (0, 1), (1, 0), (1, 2), (1, 0)]))


def test_behavior_constraints_hold_at_ideal_point(w3):
    beh = ideal_behavior("W3", 2)
    values = w3.structure.realization_values(ideal_realization(), make_state("W3"))
    cons = rx.behavior_constraints(w3.structure, beh)
    assert len(cons) == len(beh) - 1
    for con in cons:
        lhs = sum(c * values[v] for v, c in con.coefficients.items())
        assert lhs == pytest.approx(con.rhs, abs=1e-12)
        assert con.family[0] in "ST"


def test_behavior_constraints_reject_bad_eps(w3):
    with pytest.raises(ValueError):
        rx.behavior_constraints(w3.structure, ideal_behavior("W3", 2), 1.5)


def test_correlator_family_names():
    assert rx.correlator_family((0, None, None)) == "S0"
    assert rx.correlator_family((2, 1, None)) == "T12"


def test_assembled_problem_feasible_at_ideal_point(w3):
    beh = ideal_behavior("W3", 2)
    prob = rx.assemble(w3.structure, rx.behavior_constraints(w3.structure, beh), w3.functional)
    values = w3.structure.realization_values(ideal_realization(), make_state("W3"))
    x = values[prob.var_ids]
    assert np.max(np.abs(prob.eq_matrix @ x - prob.eq_rhs)) < 1e-12
    assert np.linalg.eigvalsh(prob.blocks[0].evaluate(x))[0] > -1e-10
    assert prob.objective(x) == pytest.approx(1.0, abs=1e-10)
    assert all(lab for lab in prob.eq_labels)


def test_assemble_maximize_flips_objective(w3):
    zzz = w3.structure.var(canonicalize([(0, 0), (1, 0), (2, 0)]))
    prob = rx.assemble(w3.structure, [], {zzz: 1.0}, maximize=True)
    x = np.zeros(prob.num_vars)
    x[list(prob.var_ids).index(zzz)] = 0.5
    assert prob.objective(x) == pytest.approx(0.5)


def test_localizing_block_and_hermiticity():
    sc = Scenario(1, ("M0", "M1"))
    basis = rx.MonomialBasis(sc, [IDENTITY, canonicalize([(0, 0)]), canonicalize([(0, 1)])])
    st_ = rx.build_moment_structure(basis)
    poly = OperatorPolynomial.letter(0, 0) * OperatorPolynomial.letter(0, 1)   # not Hermitian
    st2 = rx.localizing_structure(st_, poly, [IDENTITY, canonicalize([(0, 0)])], "loc")
    assert len(st2.localizing) == 1 and st2.localizing[0].size == 2
    herm = rx.localizing_hermiticity(st2)
    assert herm and all(c.label.startswith("hermiticity|loc") for c in herm)


def test_bell_value_constraint():
    sc = Scenario(3, ("M0", "M1"))
    basis = rx.MonomialBasis(sc, rx.local_level_one(sc))
    st_ = rx.build_moment_structure(basis)
    con = rx.bell_value_constraint(st_, TRANSLATION_INVARIANT_INEQUALITY, 9.5)
    assert con.family == "bell" and con.rhs == pytest.approx(9.5)
