"""Moment-matrix relaxations for SWAP fidelity bounds.

The relaxation is formulated over real symmetric matrices: a word and its
adjoint share one variable. The real part of a Hermitian PSD moment matrix
is itself PSD, obeys the same real constraints and has the same objective,
so both formulations have the same optimum.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .algebra import (IDENTITY, Monomial, OperatorPolynomial, PermutationGroup, Scenario,
                      adjoint, apply_permutation, canonicalize, hermitian_key, monomial_from_assignment,
                      monomial_matrix, multiply, parse_monomial)
from .bell import BellCoefficients
from .oracle import Behavior, PureState
from .sdp.problem import Block, SdpProblem

logger = logging.getLogger(__name__)


class MissingMonomialError(KeyError):
    """A monomial has no variable in the moment structure."""


# --------------------------------------------------------------------------
# monomial bases


@dataclass
class MonomialBasis:
    scenario: Scenario
    monomials: list[Monomial]
    provenance: str = "local-level-1"
    augmented: list[Monomial] = field(default_factory=list)

    def __post_init__(self):
        if not self.monomials or self.monomials[0] != IDENTITY:
            raise ValueError("the identity must be the first basis element")
        if len(set(self.monomials)) != len(self.monomials):
            raise ValueError("duplicate basis elements")

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def manifest(self) -> dict:
        return {
            "scenario": {"num_parties": self.scenario.num_parties,
                         "labels": list(self.scenario.labels)},
            "provenance": self.provenance,
            "size": len(self.monomials),
            "monomials": [str(m) for m in self.monomials],
            "augmented": [str(m) for m in self.augmented],
        }

    @classmethod
    def from_manifest(cls, data: Mapping) -> "MonomialBasis":
        sc = data["scenario"]
        scenario = Scenario(sc["num_parties"], tuple(sc["labels"]))
        return cls(scenario, [parse_monomial(t) for t in data["monomials"]],
                   data.get("provenance", "manifest"),
                   [parse_monomial(t) for t in data.get("augmented", [])])


def local_level_one(scenario: Scenario, max_parties: int | None = None) -> list[Monomial]:
    """Products of at most one observable per party, optionally touching at
    most ``max_parties`` parties."""
    n, m = scenario.num_parties, scenario.num_measurements
    limit = n if max_parties is None else max_parties
    words = []
    for key in itertools.product([None, *range(m)], repeat=n):
        if sum(k is not None for k in key) <= limit:
            words.append(monomial_from_assignment(key))
    return sorted(set(words), key=Monomial.sort_key)


def same_party_products(scenario: Scenario) -> list[Monomial]:
    """All words ``A_a A_b`` with ``a != b`` on a single party."""
    k = scenario.num_measurements
    return [canonicalize([(p, a), (p, b)]) for p in range(scenario.num_parties)
            for a in range(k) for b in range(k) if a != b]


def _splits(w: Monomial, num_parties: int, max_party_degree: int):
    """All ``(u, v)`` with ``adjoint(u) v = w`` obtained by cutting each party block."""
    blocks = [w.party_word(p) for p in range(num_parties)]
    for cuts in itertools.product(*[range(len(b) + 1) for b in blocks]):
        left, right = [], []
        ok = True
        for b, k in zip(blocks, cuts):
            if k > max_party_degree or len(b) - k > max_party_degree:
                ok = False
                break
            left.extend(b[:k])
            right.extend(b[k:])
        if ok:
            yield adjoint(canonicalize(left)), canonicalize(right)


def default_basis(scenario: Scenario, fidelity_monomials: Iterable[Monomial],
                  required: Iterable[Monomial] = (), group: PermutationGroup | None = None,
                  max_parties: int | None = None, max_party_degree: int = 2,
                  extra: Iterable[Monomial] = ()) -> MonomialBasis:
    """Local level one, greedily augmented until every target is a moment.

    Words in ``extra`` (with their orbits) are appended to the basis before
    the augmentation starts.

    A target ``w`` is covered once some pair of basis words ``u, v`` gives
    ``adjoint(u) v`` equal to ``w`` or its adjoint. Uncovered targets are
    processed in ``(degree, word)`` order; for each, the cut of ``w`` into
    per-party pieces that needs the fewest new words is taken (ties broken
    lexicographically), and the new words are added together with their
    orbits under ``group``.
    """
    basis = local_level_one(scenario, max_parties)
    if group is not None:
        basis = _close_under(basis, group)
    present = set(basis)
    products = {hermitian_key(multiply(adjoint(u), v)) for u in basis for v in basis}
    augmented: list[Monomial] = []

    def add(word: Monomial):
        new = [word] if group is None else sorted(group.orbit(word), key=Monomial.sort_key)
        for x in new:
            if x in present:
                continue
            ax = adjoint(x)
            for u in basis:
                products.add(hermitian_key(multiply(ax, u)))
                products.add(hermitian_key(multiply(adjoint(u), x)))
            products.add(IDENTITY)
            basis.append(x)
            present.add(x)
            augmented.append(x)

    for x in extra:
        scenario.validate(x)
        add(x)
    targets = sorted({canonicalize(t.word) for t in itertools.chain(fidelity_monomials, required)},
                     key=Monomial.sort_key)
    for w in targets:
        scenario.validate(w)
        if hermitian_key(w) in products:
            continue
        best = None
        for u, v in _splits(w, scenario.num_parties, max_party_degree):
            missing = sorted({x for x in (u, v) if x not in present}, key=Monomial.sort_key)
            key = (len(missing), [x.sort_key() for x in missing])
            if best is None or key < best[0]:
                best = (key, missing)
        if best is None:
            raise ValueError(f"cannot reach {w} with per-party degree <= {max_party_degree}")
        for x in best[1]:
            add(x)
    provenance = "augmented" if augmented else "local-level-1"
    return MonomialBasis(scenario, basis, provenance, augmented)


def _close_under(words: list[Monomial], group: PermutationGroup) -> list[Monomial]:
    out = list(words)
    seen = set(out)
    for w in words:
        for x in sorted(group.orbit(w), key=Monomial.sort_key):
            if x not in seen:
                out.append(x)
                seen.add(x)
    return out


# --------------------------------------------------------------------------
# moment structures


@dataclass
class LocalizingBlock:
    """PSD block whose entries are linear in the moment variables."""

    size: int
    terms: list  # (i, j, var, coeff) with i <= j
    label: str = ""
    skew: list = field(default_factory=list)  # (i, j, var, coeff), i < j: entry (i, j) minus entry (j, i)


class MomentStructure:
    """Moment matrix ``Gamma[i, j] = x[var(adjoint(u_i) u_j)]`` plus localizing blocks.

    Variable 0 is the identity and is fixed to 1. After :func:`symmetrize`
    every variable stands for a whole group orbit of words.
    """

    def __init__(self, basis: MonomialBasis, words: list[Monomial], var_of: dict,
                 gamma: np.ndarray, localizing: list[LocalizingBlock] | None = None,
                 group: PermutationGroup | None = None, fixed: dict | None = None):
        self.basis = basis
        self.scenario = basis.scenario
        self.words = words
        self.var_of = var_of
        self.gamma = gamma
        self.localizing = localizing or []
        self.group = group
        self.fixed = {0: 1.0} if fixed is None else fixed

    @property
    def num_vars(self) -> int:
        return len(self.words)

    def key(self, mono: Monomial) -> Monomial:
        if self.group is None:
            return hermitian_key(mono)
        return self.group.representative(mono)

    def lookup(self, mono: Monomial) -> int | None:
        return self.var_of.get(self.key(mono))

    def var(self, mono: Monomial) -> int:
        v = self.lookup(mono)
        if v is None:
            raise MissingMonomialError(f"monomial {mono} is not a moment of this structure")
        return v

    def _var_or_new(self, mono: Monomial) -> int:
        k = self.key(mono)
        v = self.var_of.get(k)
        if v is None:
            v = len(self.words)
            self.var_of[k] = v
            self.words.append(k)
        return v

    def copy(self) -> "MomentStructure":
        return MomentStructure(self.basis, list(self.words), dict(self.var_of), self.gamma.copy(),
                               list(self.localizing), self.group, dict(self.fixed))

    def block_matrices(self, values: np.ndarray) -> list[np.ndarray]:
        """Numerical blocks for a vector of variable values."""
        out = [np.asarray(values)[self.gamma]]
        for blk in self.localizing:
            mat = np.zeros((blk.size, blk.size))
            for i, j, v, c in blk.terms:
                mat[i, j] += c * values[v]
                if i != j:
                    mat[j, i] += c * values[v]
            out.append(mat)
        return out

    def realization_values(self, realization, state) -> np.ndarray:
        """Variable values ``Re <psi| w |psi>`` for a concrete realization.

        For a symmetrized structure the orbit average is returned.
        """
        psi = np.asarray(getattr(state, "amplitudes", state), dtype=complex)
        cache = {}

        def expect(w):
            if w not in cache:
                mat = monomial_matrix(w, realization)
                cache[w] = float(np.real(np.vdot(psi, mat @ psi)))
            return cache[w]

        values = np.zeros(self.num_vars)
        for v, w in enumerate(self.words):
            if self.group is None:
                values[v] = expect(w)
            else:
                values[v] = np.mean([expect(apply_permutation(g, w)) for g in self.group])
        return values


def build_moment_structure(basis: MonomialBasis) -> MomentStructure:
    n = len(basis)
    words: list[Monomial] = []
    var_of: dict[Monomial, int] = {}
    gamma = np.zeros((n, n), dtype=np.int64)
    adj = [adjoint(u) for u in basis]
    for i in range(n):
        for j in range(i, n):
            k = hermitian_key(multiply(adj[i], basis.monomials[j]))
            v = var_of.get(k)
            if v is None:
                v = len(words)
                var_of[k] = v
                words.append(k)
            gamma[i, j] = gamma[j, i] = v
    if words[0] != IDENTITY:
        raise AssertionError("identity must be variable 0")
    return MomentStructure(basis, words, var_of, gamma)


def symmetrize(structure: MomentStructure, group: PermutationGroup) -> MomentStructure:
    """Merge variables along the orbits of ``group``.

    The basis must be closed under the group, so that each group element acts
    on the moment matrix as a permutation of rows and columns.
    """
    basis_set = set(structure.basis.monomials)
    for u in structure.basis:
        for g in group:
            if apply_permutation(g, u) not in basis_set:
                raise ValueError(f"basis is not closed under the group: {u} -> {apply_permutation(g, u)}")
    new_words: list[Monomial] = []
    new_var_of: dict[Monomial, int] = {}
    remap = np.zeros(structure.num_vars, dtype=np.int64)
    for v, w in enumerate(structure.words):
        k = group.representative(w)
        nv = new_var_of.get(k)
        if nv is None:
            nv = len(new_words)
            new_var_of[k] = nv
            new_words.append(k)
        remap[v] = nv
    fixed: dict[int, float] = {}
    for v, val in structure.fixed.items():
        nv = int(remap[v])
        if nv in fixed and abs(fixed[nv] - val) > 1e-12:
            raise ValueError(f"inconsistent fixed values in the orbit of {new_words[nv]}")
        fixed[nv] = val
    localizing = [LocalizingBlock(b.size, [(i, j, int(remap[v]), c) for i, j, v, c in b.terms], b.label,
                                  [(i, j, int(remap[v]), c) for i, j, v, c in b.skew])
                  for b in structure.localizing]
    out = MomentStructure(structure.basis, new_words, new_var_of, remap[structure.gamma],
                          localizing, group, fixed)
    logger.info("symmetrized %d variables into %d orbits (group of order %d)",
                structure.num_vars, out.num_vars, len(group))
    return out


def localizing_structure(structure: MomentStructure, poly: OperatorPolynomial,
                         loc_basis: Sequence[Monomial], label: str = "") -> MomentStructure:
    """Append the localizing block of ``poly`` over ``loc_basis``.

    Entry ``(i, j)`` is the real moment of ``adjoint(u_i) poly u_j``,
    symmetrized over ``i <-> j``. For a non-Hermitian ``poly`` the
    difference between the two orders is kept as well, so that
    :func:`localizing_hermiticity` can demand it vanish. Words not yet in the
    structure become new variables.
    """
    out = structure.copy()
    terms: dict[tuple[int, int, int], float] = {}
    skew: dict[tuple[int, int, int], float] = {}
    polyf = poly.to_float()
    n = len(loc_basis)
    for i in range(n):
        ai = adjoint(loc_basis[i])
        for j in range(i, n):
            aj = adjoint(loc_basis[j])
            for mono, c in polyf.items():
                for sign, (left, right) in ((1.0, (ai, loc_basis[j])), (-1.0, (aj, loc_basis[i]))):
                    w = multiply(multiply(left, mono), right)
                    v = out._var_or_new(w)
                    terms[(i, j, v)] = terms.get((i, j, v), 0.0) + 0.5 * c
                    if i < j:
                        skew[(i, j, v)] = skew.get((i, j, v), 0.0) + sign * c
    out.localizing.append(LocalizingBlock(n, [(i, j, v, c) for (i, j, v), c in terms.items() if c], label,
                                          [(i, j, v, c) for (i, j, v), c in skew.items() if c]))
    return out


def localizing_hermiticity(structure: MomentStructure, tol: float = 1e-12) -> list[LinearConstraint]:
    """Equalities making every localizing matrix symmetric entry by entry.

    An operator inequality ``P >= 0`` makes ``P`` Hermitian, so
    ``<u^dagger P v>`` and ``<v^dagger P u>`` agree for every pair of basis
    words. The plain localizing block only sees the Hermitian part of ``P``;
    these equalities restore what the inequality says about the rest.
    """
    out = []
    for blk in structure.localizing:
        rows: dict[tuple[int, int], dict[int, float]] = {}
        for i, j, v, c in blk.skew:
            row = rows.setdefault((i, j), {})
            row[v] = row.get(v, 0.0) + c
        seen = set()
        for (i, j), row in sorted(rows.items()):
            row = {v: c for v, c in row.items() if abs(c) > tol}
            fixed = sum(c * structure.fixed[v] for v, c in row.items() if v in structure.fixed)
            free = {v: c for v, c in row.items() if v not in structure.fixed}
            if not free:
                if abs(fixed) > 1e-9:
                    raise ValueError(f"localizing block {blk.label!r} cannot be symmetric")
                continue
            key = tuple(sorted((v, round(c, 12)) for v, c in free.items()))
            if key in seen:
                continue
            seen.add(key)
            out.append(LinearConstraint(free, -fixed, f"hermiticity|{blk.label}[{i},{j}]"))
    return out


# --------------------------------------------------------------------------
# SWAP fidelity


def _as_party_poly(spec, party: int) -> OperatorPolynomial:
    if isinstance(spec, OperatorPolynomial):
        return spec
    return OperatorPolynomial.letter(party, int(spec))


def swap_kraus(z: OperatorPolynomial, x: OperatorPolynomial) -> dict[tuple[int, int], OperatorPolynomial]:
    """Per-party blocks ``K_j^dagger K_i`` of the SWAP isometry.

    The circuit maps ``|0>|Psi>`` to ``|0> K_0 |Psi> + |1> K_1 |Psi>`` with
    ``K_0 = (1 + Z)/2`` and ``K_1 = X (1 - Z)/2``. Keys are ``(j, i)``.
    """
    one = OperatorPolynomial.constant(1)
    half = Fraction(1, 2)
    k = {0: (one + z) * half, 1: x * (one - z) * half}
    return {(j, i): k[j].adjoint() * k[i] for j in (0, 1) for i in (0, 1)}


def swap_fidelity_polynomial(target: PureState, z_specs: Sequence, x_specs: Sequence) -> OperatorPolynomial:
    """``<target| rho_swap |target>`` as a polynomial in the unknown observables.

    ``z_specs[p]`` and ``x_specs[p]`` are measurement indices or polynomials
    for the controlled-Z and controlled-X operators of party ``p``.
    """
    n = target.num_parties
    amps = target.real_amplitudes()
    blocks = [swap_kraus(_as_party_poly(z_specs[p], p), _as_party_poly(x_specs[p], p)) for p in range(n)]
    support = [i for i in range(2 ** n) if amps[i] != 0.0]
    cache: dict = {}

    def product(js, is_):
        key = (js, is_)
        if key not in cache:
            poly = OperatorPolynomial.constant(1)
            for p in range(n):
                poly = poly * blocks[p][(js[p], is_[p])]
            cache[key] = poly
        return cache[key]

    terms: dict[Monomial, float] = {}
    for i in support:
        ibits = tuple((i >> (n - 1 - p)) & 1 for p in range(n))
        for j in support:
            jbits = tuple((j >> (n - 1 - p)) & 1 for p in range(n))
            weight = amps[i] * amps[j]
            for mono, c in product(jbits, ibits).terms.items():
                terms[mono] = terms.get(mono, 0.0) + weight * float(c)
    return OperatorPolynomial({m: c for m, c in terms.items() if abs(c) > 1e-15})


@dataclass
class FidelityFunctional:
    """``constant + sum_v coefficients[v] * x[v]``."""

    constant: float
    coefficients: dict[int, float]
    target: str = ""
    polynomial: OperatorPolynomial | None = None

    def evaluate(self, values: np.ndarray) -> float:
        return self.constant + sum(c * values[v] for v, c in self.coefficients.items())


def linear_functional(structure: MomentStructure, poly: OperatorPolynomial | Mapping) -> tuple[float, dict[int, float]]:
    terms = poly.to_float() if isinstance(poly, OperatorPolynomial) else dict(poly)
    constant = 0.0
    coeffs: dict[int, float] = {}
    for mono, c in terms.items():
        v = structure.var(mono)
        if v in structure.fixed:
            constant += c * structure.fixed[v]
        else:
            coeffs[v] = coeffs.get(v, 0.0) + c
    return constant, {v: c for v, c in coeffs.items() if c != 0.0}


def swap_fidelity(target: PureState, structure: MomentStructure, z_specs: Sequence | None = None,
                  x_specs: Sequence | None = None) -> FidelityFunctional:
    """Fidelity of the swapped-out state with ``target`` as a linear functional.

    By default party ``p`` uses measurement 0 in the Z slot and 1 in the X
    slot. Raises :class:`MissingMonomialError` when the basis is too small.
    """
    n = target.num_parties
    z_specs = [0] * n if z_specs is None else z_specs
    x_specs = [1] * n if x_specs is None else x_specs
    poly = swap_fidelity_polynomial(target, z_specs, x_specs)
    constant, coeffs = linear_functional(structure, poly)
    return FidelityFunctional(constant, coeffs, target.label, poly)


# --------------------------------------------------------------------------
# constraints


@dataclass
class LinearConstraint:
    coefficients: dict[int, float]
    rhs: float
    label: str = ""

    def __post_init__(self):
        if not any(c != 0.0 for c in self.coefficients.values()):
            raise ValueError(f"constraint {self.label!r} has no nonzero coefficient")

    @property
    def family(self) -> str:
        return self.label.split("|", 1)[0]


def correlator_family(assignment: Sequence[int | None]) -> str:
    """``S<i>`` for one-body, ``T<i><j>`` (``i <= j``) for two-body entries."""
    meas = sorted(m for m in assignment if m is not None)
    if len(meas) == 1:
        return f"S{meas[0]}"
    if len(meas) == 2:
        return f"T{meas[0]}{meas[1]}"
    return f"K{len(meas)}"


def behavior_constraints(structure: MomentStructure, behavior: Behavior, eps: float = 0.0) -> list[LinearConstraint]:
    """``x[correlator] = (1 - eps) * value`` for every non-identity entry.

    Only the entries in ``behavior`` are constrained; every other moment,
    including observable higher-body correlators, stays free.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must be in [0, 1], got {eps}")
    out = []
    for key, value in sorted(behavior.items(), key=lambda kv: str(kv[0])):
        mono = monomial_from_assignment(key)
        if mono.is_identity:
            continue
        v = structure.var(mono)
        label = f"{correlator_family(key)}|{structure.scenario.describe(mono)}"
        out.append(LinearConstraint({v: 1.0}, (1.0 - eps) * value, label))
    return out


def bell_value_constraint(structure: MomentStructure, ineq: BellCoefficients, value: float) -> LinearConstraint:
    if ineq.is_zero():
        raise ValueError("the zero expression cannot be constrained")
    constant, coeffs = linear_functional(structure, ineq.polynomial())
    return LinearConstraint(coeffs, value - constant, f"bell|{value:g}")


# --------------------------------------------------------------------------
# assembly


def _block_from_entries(size: int, entries, var_index: Mapping[int, int], fixed: Mapping[int, float],
                        num_sdp_vars: int) -> Block:
    const = np.zeros((size, size))
    rows, cols, vals = [], [], []
    for i, j, v, c in entries:
        if v in fixed:
            const[i, j] += c * fixed[v]
            if i != j:
                const[j, i] += c * fixed[v]
            continue
        k = var_index[v]
        rows.append(i * size + j)
        cols.append(k)
        vals.append(c)
        if i != j:
            rows.append(j * size + i)
            cols.append(k)
            vals.append(c)
    coef = sp.csc_matrix((vals, (rows, cols)), shape=(size * size, num_sdp_vars))
    coef.sum_duplicates()
    return Block(size, const, coef)


def assemble(structure: MomentStructure, constraints: Sequence[LinearConstraint],
             objective: FidelityFunctional | Mapping[int, float] | None, maximize: bool = False,
             constant: float = 0.0) -> SdpProblem:
    """Affine-PSD-block problem over the free moment variables.

    The objective may be a :class:`FidelityFunctional`, a mapping from
    variable ids to coefficients, or ``None`` for a pure feasibility problem.
    """
    free = [v for v in range(structure.num_vars) if v not in structure.fixed]
    index = {v: k for k, v in enumerate(free)}
    m = len(free)
    n = structure.gamma.shape[0]
    iu = np.triu_indices(n)
    gamma_entries = zip(iu[0].tolist(), iu[1].tolist(), structure.gamma[iu].tolist(), itertools.repeat(1.0))
    blocks = [_block_from_entries(n, gamma_entries, index, structure.fixed, m)]
    for blk in structure.localizing:
        blocks.append(_block_from_entries(blk.size, blk.terms, index, structure.fixed, m))

    c = np.zeros(m)
    offset = constant
    if isinstance(objective, FidelityFunctional):
        offset += objective.constant
        coeffs = objective.coefficients
    else:
        coeffs = dict(objective or {})
    for v, coef in coeffs.items():
        if v in structure.fixed:
            offset += coef * structure.fixed[v]
        else:
            c[index[v]] += coef
    if maximize:
        c, offset = -c, -offset

    rows, rhs, labels = [], [], []
    for con in constraints:
        row = np.zeros(m)
        b = con.rhs
        for v, coef in con.coefficients.items():
            if v >= structure.num_vars:
                raise MissingMonomialError(f"constraint {con.label!r} references unknown variable {v}")
            if v in structure.fixed:
                b -= coef * structure.fixed[v]
            else:
                row[index[v]] += coef
        if not row.any():
            if abs(b) > 1e-12:
                raise ValueError(f"constraint {con.label!r} contradicts a fixed moment")
            continue
        rows.append(row)
        rhs.append(b)
        labels.append(con.label)
    eq = sp.csr_matrix(np.array(rows)) if rows else sp.csr_matrix((0, m))
    dictionary = {k: structure.scenario.describe(structure.words[v]) for k, v in enumerate(free)}
    return SdpProblem(num_vars=m, blocks=blocks, c=c, offset=offset, eq_matrix=eq,
                      eq_rhs=np.array(rhs, dtype=float), eq_labels=labels, dictionary=dictionary,
                      maximize=maximize, var_ids=np.array(free, dtype=np.int64))


def structure_manifest(structure: MomentStructure) -> dict:
    data = structure.basis.manifest()
    data["num_variables"] = structure.num_vars
    data["group_order"] = 1 if structure.group is None else len(structure.group)
    data["localizing_blocks"] = [b.size for b in structure.localizing]
    data["variables"] = {str(v): str(w) for v, w in enumerate(structure.words)}
    return data


def write_manifest(structure: MomentStructure, path) -> None:
    with open(path, "w") as fh:
        json.dump(structure_manifest(structure), fh, indent=1)
