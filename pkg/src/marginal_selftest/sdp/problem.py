"""Data types for affine-PSD-block problems.

Primal form (the moment side)::

    minimize    c^T x + offset
    subject to  F_k(x) = C_k + sum_i x_i A_{k,i}  >= 0   for every block k
                E x = b

Dual form::

    maximize    -sum_k <C_k, Y_k> + b^T mu + offset
    subject to  sum_k <A_{k,i}, Y_k> + (E^T mu)_i = c_i,   Y_k >= 0

When ``maximize`` is set, ``c`` and ``offset`` hold the negated objective and
reported values are flipped back to the original sense.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass
class Block:
    """``F(x) = const + reshape(coef @ x, (size, size))``, symmetric."""

    size: int
    const: np.ndarray
    coef: sp.csc_matrix

    def __post_init__(self):
        self.const = np.asarray(self.const, dtype=float)
        self.coef = sp.csc_matrix(self.coef)
        if self.const.shape != (self.size, self.size):
            raise ValueError("constant part has the wrong shape")
        if self.coef.shape[0] != self.size * self.size:
            raise ValueError("coefficient matrix has the wrong number of rows")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        mat = self.const + (self.coef @ x).reshape(self.size, self.size)
        return 0.5 * (mat + mat.T)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """``(<A_i, Y>)_i``."""
        return self.coef.T @ np.asarray(y).reshape(-1)


@dataclass
class SdpProblem:
    num_vars: int
    blocks: list[Block]
    c: np.ndarray
    offset: float = 0.0
    eq_matrix: sp.csr_matrix | None = None
    eq_rhs: np.ndarray | None = None
    eq_labels: list[str] = field(default_factory=list)
    dictionary: dict[int, str] = field(default_factory=dict)
    maximize: bool = False
    var_ids: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.shape != (self.num_vars,):
            raise ValueError("objective length does not match the number of variables")
        if self.eq_matrix is None:
            self.eq_matrix = sp.csr_matrix((0, self.num_vars))
        self.eq_matrix = sp.csr_matrix(self.eq_matrix)
        self.eq_rhs = np.zeros(0) if self.eq_rhs is None else np.asarray(self.eq_rhs, dtype=float)
        if self.eq_matrix.shape != (len(self.eq_rhs), self.num_vars):
            raise ValueError("equality matrix does not match its right-hand side")
        if self.eq_labels and len(self.eq_labels) != len(self.eq_rhs):
            raise ValueError("one label per equality row is required")
        for blk in self.blocks:
            if blk.coef.shape[1] != self.num_vars:
                raise ValueError("block coefficient matrix does not match the number of variables")

    @property
    def sense(self) -> str:
        return "max" if self.maximize else "min"

    def objective(self, x: np.ndarray) -> float:
        """Objective in the original sense."""
        val = float(self.c @ x + self.offset)
        return -val if self.maximize else val

    def block_sizes(self) -> list[int]:
        return [b.size for b in self.blocks]


@dataclass
class SdpSolution:
    """Result of an interior-point solve.

    ``primal_value`` and ``dual_value`` are reported in the problem's own
    sense; ``gap`` is their absolute difference.
    """

    status: str
    x: np.ndarray
    primal_value: float
    dual_value: float
    dual_blocks: list[np.ndarray]
    multipliers: np.ndarray
    iterations: int
    primal_infeasibility: float = 0.0
    dual_infeasibility: float = 0.0
    history: list[dict] = field(default_factory=list)
    extra_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    face: object = None

    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max-iterations"
    INFEASIBLE = "infeasible-detected"
    NUMERICAL = "numerical-trouble"

    @property
    def gap(self) -> float:
        return abs(self.primal_value - self.dual_value)

    @property
    def relative_gap(self) -> float:
        return self.gap / (1.0 + abs(self.primal_value) + abs(self.dual_value))

    @property
    def ok(self) -> bool:
        return self.status == self.OPTIMAL

    def to_json(self, problem: SdpProblem | None = None) -> dict:
        data = {
            "status": self.status,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "iterations": self.iterations,
            "primal_infeasibility": self.primal_infeasibility,
            "dual_infeasibility": self.dual_infeasibility,
            "x": self.x.tolist(),
            "multipliers": self.multipliers.tolist(),
            "dual_blocks": [y.tolist() for y in self.dual_blocks],
        }
        if problem is not None:
            data["sense"] = problem.sense
            data["variables"] = {str(k): v for k, v in problem.dictionary.items()}
            data["equality_labels"] = list(problem.eq_labels)
        return data
