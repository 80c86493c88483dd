"""Tripartite Bell expressions built from one- and two-body correlators.

``S_i`` is the sum of ``<M_i>`` over the three parties. For the
permutation-invariant family ``T_ii`` sums the three pairs and ``T_ij``
(``i != j``) sums all six ordered pairs; for the translation-invariant family
``T_ij`` sums the three cyclic neighbours ``(A,B), (B,C), (C,A)`` only.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .algebra import Monomial, OperatorPolynomial, canonicalize

PERMUTATION = "permutation-invariant"
TRANSLATION = "translation-invariant"


@dataclass(frozen=True)
class BellCoefficients:
    """Weights of the ``S_i`` and ``T_ij`` families.

    ``singles[i]`` multiplies ``S_i``; ``pairs[i][j]`` multiplies ``T_ij``.
    For the permutation-invariant kind only ``i <= j`` entries are used.
    """

    singles: tuple
    pairs: tuple
    kind: str = PERMUTATION

    def __post_init__(self):
        if self.kind not in (PERMUTATION, TRANSLATION):
            raise ValueError(f"unknown symmetry kind {self.kind!r}")
        m = len(self.singles)
        if len(self.pairs) != m or any(len(row) != m for row in self.pairs):
            raise ValueError("pairs must be a square table matching singles")
        if self.kind == PERMUTATION:
            for i, j in itertools.combinations(range(m), 2):
                if self.pairs[j][i]:
                    raise ValueError("permutation-invariant pairs are stored upper-triangular")

    @classmethod
    def permutation_invariant(cls, alpha, beta, gamma, lambda0, lambda1, lambda2,
                              omega0, omega1, omega2) -> "BellCoefficients":
        pairs = ((lambda0, omega0, omega1),
                 (0, lambda1, omega2),
                 (0, 0, lambda2))
        return cls((alpha, beta, gamma), pairs, PERMUTATION)

    @classmethod
    def translation_invariant(cls, singles: Sequence, pairs: Sequence[Sequence]) -> "BellCoefficients":
        return cls(tuple(singles), tuple(tuple(r) for r in pairs), TRANSLATION)

    @classmethod
    def zero(cls, num_measurements: int = 3, kind: str = PERMUTATION) -> "BellCoefficients":
        m = num_measurements
        return cls((0,) * m, ((0,) * m,) * m, kind)

    @property
    def num_measurements(self) -> int:
        return len(self.singles)

    # names used for the three-measurement permutation-invariant template
    alpha = property(lambda self: self.singles[0])
    beta = property(lambda self: self.singles[1])
    gamma = property(lambda self: self.singles[2])
    lambda0 = property(lambda self: self.pairs[0][0])
    lambda1 = property(lambda self: self.pairs[1][1])
    lambda2 = property(lambda self: self.pairs[2][2])
    omega0 = property(lambda self: self.pairs[0][1])
    omega1 = property(lambda self: self.pairs[0][2])
    omega2 = property(lambda self: self.pairs[1][2])

    def as_tuple(self) -> tuple:
        """``(alpha, beta, gamma, lambda0, lambda1, lambda2, omega0, omega1, omega2)``."""
        return (self.alpha, self.beta, self.gamma, self.lambda0, self.lambda1,
                self.lambda2, self.omega0, self.omega1, self.omega2)

    def is_zero(self) -> bool:
        return not any(self.singles) and not any(any(r) for r in self.pairs)

    def scaled(self, s) -> "BellCoefficients":
        return BellCoefficients(tuple(s * x for x in self.singles),
                                tuple(tuple(s * x for x in r) for r in self.pairs), self.kind)

    def __neg__(self):
        return self.scaled(-1)

    def terms(self) -> dict[Monomial, object]:
        """Coefficient of every one- and two-body correlator of three parties."""
        out: dict[Monomial, object] = {}

        def add(word, c):
            if not c:
                return
            mono = canonicalize(word)
            out[mono] = out[mono] + c if mono in out else c

        m = self.num_measurements
        for i in range(m):
            for p in range(3):
                add([(p, i)], self.singles[i])
        cyclic = [(0, 1), (1, 2), (2, 0)]
        for i, j in itertools.product(range(m), repeat=2):
            c = self.pairs[i][j]
            if not c:
                continue
            if self.kind == TRANSLATION or i == j:
                for p, q in cyclic:
                    add([(p, i), (q, j)], c)
            elif i < j:
                for p, q in cyclic:
                    add([(p, i), (q, j)], c)
                    add([(p, j), (q, i)], c)
        return {k: v for k, v in out.items() if v}

    def polynomial(self) -> OperatorPolynomial:
        return OperatorPolynomial(self.terms())

    def evaluate(self, values: Mapping[Monomial, float]) -> float:
        """Value on a table of correlators keyed by monomial."""
        return sum(float(c) * values[mono] for mono, c in self.terms().items())


# translation-invariant expression with two settings per party, signed so that local models obey B <= 9
TRANSLATION_INVARIANT_INEQUALITY = BellCoefficients.translation_invariant(
    singles=(1, 3),
    pairs=((1, -1), (-2, -3)),
)


def local_bound(ineq: BellCoefficients) -> Fraction:
    """Exact maximum over all deterministic +-1 strategies of three parties."""
    terms = {mono: Fraction(c) if isinstance(c, (int, Fraction)) else float(c)
             for mono, c in ineq.terms().items()}
    m = ineq.num_measurements
    best = None
    for signs in itertools.product((1, -1), repeat=3 * m):
        value = 0
        for mono, c in terms.items():
            prod = 1
            for letter in mono.word:
                prod *= signs[letter.party * m + letter.meas]
            value += c * prod
        if best is None or value > best:
            best = value
    return best
