"""Words and polynomials in noncommuting, per-party dichotomic observables.

Every observable squares to the identity and observables held by different
parties commute. A :class:`Monomial` is a word kept in canonical form:
letters grouped by ascending party, the order inside one party preserved as
written, and adjacent equal letters cancelled until none remain.

Coefficients of operator polynomials live in :class:`QSqrt2`, the exact
field Q(sqrt 2), so that symbolic expansions carry no rounding error. They
are converted to floats only when a problem is handed to the solver.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

import numpy as np

PARTY_NAMES = "ABCDEFGH"


class Letter(NamedTuple):
    """Observable number ``meas`` of party ``party``."""

    party: int
    meas: int

    def __str__(self) -> str:
        return f"{PARTY_NAMES[self.party]}{self.meas}"


def _reduce(letters: Iterable[tuple[int, int]]) -> tuple[Letter, ...]:
    # sort is stable: same-party order survives, parties become contiguous,
    # so a single stack pass cancels adjacent pairs to the fixpoint
    stack: list[Letter] = []
    for letter in sorted(letters, key=lambda l: l[0]):
        letter = Letter(*letter)
        if stack and stack[-1] == letter:
            stack.pop()
        else:
            stack.append(letter)
    return tuple(stack)


@dataclass(frozen=True)
class Monomial:
    """Canonical word. Build instances through :func:`canonicalize`."""

    word: tuple[Letter, ...] = ()

    @property
    def is_identity(self) -> bool:
        return not self.word

    @property
    def degree(self) -> int:
        return len(self.word)

    @property
    def parties(self) -> tuple[int, ...]:
        return tuple(sorted({l.party for l in self.word}))

    def party_word(self, party: int) -> tuple[Letter, ...]:
        return tuple(l for l in self.word if l.party == party)

    def sort_key(self):
        return (len(self.word), self.word)

    def __lt__(self, other: "Monomial") -> bool:
        return self.sort_key() < other.sort_key()

    def __mul__(self, other: "Monomial") -> "Monomial":
        return multiply(self, other)

    def __str__(self) -> str:
        return " ".join(str(l) for l in self.word) if self.word else "1"

    def __repr__(self) -> str:
        return f"Monomial({str(self)!r})"


IDENTITY = Monomial(())


@dataclass(frozen=True)
class Scenario:
    """``num_parties`` parties, each holding the observables named in ``labels``."""

    num_parties: int
    labels: tuple[str, ...] = ("Z", "X", "D")

    @property
    def num_measurements(self) -> int:
        return len(self.labels)

    def letters(self, party: int | None = None) -> list[Letter]:
        parties = range(self.num_parties) if party is None else [party]
        return [Letter(p, m) for p in parties for m in range(self.num_measurements)]

    def letter_name(self, letter: Letter) -> str:
        return f"{self.labels[letter.meas]}_{PARTY_NAMES[letter.party]}"

    def describe(self, u: "Monomial") -> str:
        return " ".join(self.letter_name(l) for l in u.word) if u.word else "1"

    def validate(self, u: "Monomial") -> None:
        for l in u.word:
            if not (0 <= l.party < self.num_parties and 0 <= l.meas < self.num_measurements):
                raise ValueError(f"letter {l} is outside the scenario")


def canonicalize(letters: Iterable[tuple[int, int]]) -> Monomial:
    """Reduce a raw letter sequence to its canonical monomial.

    >>> str(canonicalize([(0, 1), (0, 0), (0, 0), (0, 1), (1, 2)]))
    'B2'
    """
    return Monomial(_reduce(letters))


def multiply(u: Monomial, v: Monomial) -> Monomial:
    return canonicalize(u.word + v.word)


def adjoint(u: Monomial) -> Monomial:
    """Reverse the letter order inside every party block."""
    return canonicalize(reversed(u.word))


def hermitian_key(u: Monomial) -> Monomial:
    """Representative of ``{u, adjoint(u)}``; both have the same real part."""
    a = adjoint(u)
    return a if a.sort_key() < u.sort_key() else u


def apply_permutation(perm: Sequence[int], u: Monomial) -> Monomial:
    """Move every letter held by party ``q`` to party ``perm[q]``."""
    return canonicalize((perm[l.party], l.meas) for l in u.word)


def parse_monomial(text: str) -> Monomial:
    """Inverse of ``str(Monomial)``: ``"A0 A1 B0"``, identity as ``"1"``."""
    text = text.strip()
    if text in ("", "1"):
        return IDENTITY
    letters = []
    for token in text.split():
        party = PARTY_NAMES.index(token[0])
        letters.append((party, int(token[1:])))
    return canonicalize(letters)


def monomial_from_assignment(assignment: Sequence[int | None]) -> Monomial:
    """Product of one observable per party; ``None`` marks the identity."""
    return canonicalize((p, m) for p, m in enumerate(assignment) if m is not None)


# --------------------------------------------------------------------------
# exact scalars


class QSqrt2:
    """Exact number ``a + b*sqrt(2)`` with rational ``a`` and ``b``."""

    __slots__ = ("a", "b")

    def __init__(self, a=0, b=0):
        self.a = Fraction(a)
        self.b = Fraction(b)

    @classmethod
    def coerce(cls, x) -> "QSqrt2":
        if isinstance(x, QSqrt2):
            return x
        if isinstance(x, (int, Fraction)):
            return cls(x)
        raise TypeError(f"cannot make an exact scalar from {x!r}")

    def __add__(self, other):
        if isinstance(other, float):
            return float(self) + other
        if not isinstance(other, (QSqrt2, int, Fraction)):
            return NotImplemented
        o = QSqrt2.coerce(other)
        return QSqrt2(self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return QSqrt2(-self.a, -self.b)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, float):
            return float(self) * other
        if not isinstance(other, (QSqrt2, int, Fraction)):
            return NotImplemented
        o = QSqrt2.coerce(other)
        return QSqrt2(self.a * o.a + 2 * self.b * o.b, self.a * o.b + self.b * o.a)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, float):
            return float(self) / other
        o = QSqrt2.coerce(other)
        norm = o.a * o.a - 2 * o.b * o.b
        if norm == 0:
            raise ZeroDivisionError("division by zero in Q(sqrt 2)")
        return self * QSqrt2(o.a / norm, -o.b / norm)

    def __eq__(self, other):
        if isinstance(other, float):
            return float(self) == other
        try:
            o = QSqrt2.coerce(other)
        except TypeError:
            return NotImplemented
        return self.a == o.a and self.b == o.b

    def __hash__(self):
        return hash((self.a, self.b))

    def __bool__(self):
        return bool(self.a) or bool(self.b)

    def __float__(self):
        return float(self.a) + float(self.b) * math.sqrt(2.0)

    def __repr__(self):
        if not self.b:
            return f"QSqrt2({self.a})"
        return f"QSqrt2({self.a} + {self.b}*sqrt2)"


SQRT2 = QSqrt2(0, 1)


def _scalar(x):
    if isinstance(x, (int, Fraction)):
        return QSqrt2(x)
    return x


# --------------------------------------------------------------------------
# polynomials


class OperatorPolynomial:
    """Linear combination of canonical monomials with real coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        for mono, coeff in (terms or {}).items():
            coeff = _scalar(coeff)
            if coeff:
                self.terms[mono] = coeff

    @classmethod
    def constant(cls, value=1) -> "OperatorPolynomial":
        return cls({IDENTITY: value})

    @classmethod
    def letter(cls, party: int, meas: int, coeff=1) -> "OperatorPolynomial":
        return cls({canonicalize([(party, meas)]): coeff})

    @classmethod
    def monomial(cls, mono: Monomial, coeff=1) -> "OperatorPolynomial":
        return cls({mono: coeff})

    def __iter__(self):
        return iter(self.terms.items())

    def __len__(self):
        return len(self.terms)

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if not isinstance(other, OperatorPolynomial):
            return NotImplemented
        return (self - other).terms == {}

    def monomials(self) -> list[Monomial]:
        return sorted(self.terms)

    def coefficient(self, mono: Monomial):
        return self.terms.get(mono, 0)

    def __add__(self, other):
        other = _as_poly(other)
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms[m] + c if m in terms else c
        return OperatorPolynomial(terms)

    __radd__ = __add__

    def __neg__(self):
        return OperatorPolynomial({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __mul__(self, other):
        if isinstance(other, OperatorPolynomial):
            return poly_multiply(self, other)
        if isinstance(other, Monomial):
            return poly_multiply(self, OperatorPolynomial.monomial(other))
        return poly_scale(self, other)

    def __rmul__(self, other):
        if isinstance(other, Monomial):
            return poly_multiply(OperatorPolynomial.monomial(other), self)
        return poly_scale(self, other)

    def adjoint(self) -> "OperatorPolynomial":
        return OperatorPolynomial({adjoint(m): c for m, c in self.terms.items()})

    def permute(self, perm: Sequence[int]) -> "OperatorPolynomial":
        return OperatorPolynomial({apply_permutation(perm, m): c for m, c in self.terms.items()})

    def hermitian_part(self) -> "OperatorPolynomial":
        return poly_scale(self + self.adjoint(), Fraction(1, 2))

    def to_float(self) -> dict[Monomial, float]:
        return {m: float(c) for m, c in self.terms.items()}

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(f"{float(c):g}*[{m}]" for m, c in sorted(self.terms.items()))

    def __repr__(self) -> str:
        return f"OperatorPolynomial({self})"


def _as_poly(x) -> OperatorPolynomial:
    if isinstance(x, OperatorPolynomial):
        return x
    if isinstance(x, Monomial):
        return OperatorPolynomial.monomial(x)
    return OperatorPolynomial.constant(x)


def poly_add(p: OperatorPolynomial, q: OperatorPolynomial) -> OperatorPolynomial:
    return p + q


def poly_scale(p: OperatorPolynomial, s) -> OperatorPolynomial:
    s = _scalar(s)
    if not s:
        return OperatorPolynomial()
    return OperatorPolynomial({m: c * s for m, c in p.terms.items()})


def poly_multiply(p: OperatorPolynomial, q: OperatorPolynomial) -> OperatorPolynomial:
    terms: dict[Monomial, object] = {}
    for (m1, c1), (m2, c2) in itertools.product(p.terms.items(), q.terms.items()):
        m = multiply(m1, m2)
        c = c1 * c2
        terms[m] = terms[m] + c if m in terms else c
    return OperatorPolynomial(terms)


# --------------------------------------------------------------------------
# party permutations


def from_cycles(cycles: str, num_parties: int) -> tuple[int, ...]:
    """Party permutation from cycle notation such as ``"(ab)"`` or ``"(abc)"``.

    In a cycle ``(x1 x2 ... xk)`` the operators held by ``x(i+1)`` are handed
    to ``x(i)`` (and those of ``x1`` to ``xk``), so ``(abc)`` turns
    ``f(Z_A, X_B, D_C)`` into ``f(X_A, D_B, Z_C)``.
    """
    perm = list(range(num_parties))
    for group in cycles.replace(" ", "").split(")"):
        group = group.strip("(")
        if not group:
            continue
        idx = [PARTY_NAMES.lower().index(ch.lower()) for ch in group]
        for i, target in enumerate(idx):
            source = idx[(i + 1) % len(idx)]
            perm[source] = target
    return tuple(perm)


def compose(g: Sequence[int], h: Sequence[int]) -> tuple[int, ...]:
    """``g o h``: apply ``h`` first."""
    return tuple(g[h[q]] for q in range(len(h)))


def invert(g: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(g)
    for q, t in enumerate(g):
        inv[t] = q
    return tuple(inv)


class PermutationGroup:
    """Finite group of party permutations, closed under composition."""

    def __init__(self, elements: Iterable[Sequence[int]]):
        elems = sorted({tuple(e) for e in elements})
        if not elems:
            raise ValueError("a group needs at least the identity")
        n = len(elems[0])
        ident = tuple(range(n))
        if ident not in elems:
            raise ValueError("group does not contain the identity")
        present = set(elems)
        for g, h in itertools.product(elems, repeat=2):
            if compose(g, h) not in present:
                raise ValueError(f"not closed: {g} o {h}")
        self.elements: list[tuple[int, ...]] = elems
        self.num_parties = n

    @classmethod
    def generated(cls, generators: Iterable[Sequence[int]], num_parties: int) -> "PermutationGroup":
        ident = tuple(range(num_parties))
        elems = {ident}
        frontier = [ident]
        gens = [tuple(g) for g in generators]
        while frontier:
            new = []
            for e in frontier:
                for g in gens:
                    x = compose(g, e)
                    if x not in elems:
                        elems.add(x)
                        new.append(x)
            frontier = new
        return cls(elems)

    @classmethod
    def trivial(cls, num_parties: int) -> "PermutationGroup":
        return cls([tuple(range(num_parties))])

    @classmethod
    def symmetric(cls, num_parties: int) -> "PermutationGroup":
        return cls(itertools.permutations(range(num_parties)))

    @classmethod
    def cyclic(cls, num_parties: int) -> "PermutationGroup":
        shift = tuple((q + 1) % num_parties for q in range(num_parties))
        return cls.generated([shift], num_parties)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def orbit(self, u: Monomial) -> set[Monomial]:
        return {apply_permutation(g, u) for g in self.elements}

    def representative(self, u: Monomial) -> Monomial:
        """Smallest element of the orbit of ``{u, adjoint(u)}``."""
        return min((hermitian_key(apply_permutation(g, u)) for g in self.elements),
                   key=Monomial.sort_key)

    def average(self, p: OperatorPolynomial) -> OperatorPolynomial:
        total = OperatorPolynomial()
        for g in self.elements:
            total = total + p.permute(g)
        return poly_scale(total, Fraction(1, len(self.elements)))


# --------------------------------------------------------------------------
# numerical bridge


def monomial_matrix(u: Monomial, realization: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
    """Dense operator of ``u`` when party ``p`` measures ``realization[p][m]``."""
    factors = []
    for p, ops in enumerate(realization):
        dim = ops[0].shape[0]
        mat = np.eye(dim, dtype=complex)
        for l in u.party_word(p):
            mat = mat @ ops[l.meas]
        factors.append(mat)
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def evaluate_poly(p: OperatorPolynomial, realization: Sequence[Sequence[np.ndarray]], state) -> float:
    """Real expectation value of ``p`` on a pure state.

    ``state`` is a :class:`~marginal_selftest.oracle.PureState` or an amplitude
    vector over the tensor product of the realization's local spaces.
    """
    psi = np.asarray(getattr(state, "amplitudes", state), dtype=complex)
    dims = [ops[0].shape[0] for ops in realization]
    if psi.size != int(np.prod(dims)):
        raise ValueError(f"state of size {psi.size} does not match local dimensions {dims}")
    value = 0.0
    for mono, coeff in p.terms.items():
        mat = monomial_matrix(mono, realization)
        value += float(coeff) * float(np.real(np.vdot(psi, mat @ psi)))
    return value
