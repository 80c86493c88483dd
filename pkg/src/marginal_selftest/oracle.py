"""Dense-matrix reference for small qubit systems.

Everything here is computed directly from state vectors and 2x2 matrices:
target states, correlators, ideal behaviors, the SWAP circuit itself, and
Bell operators. The symbolic relaxation code is checked against it.

Basis strings are read with party A as the most significant qubit, so
``|001>`` carries the excitation on party C.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from .algebra import PARTY_NAMES, Monomial, Scenario, monomial_from_assignment, monomial_matrix
from .bell import BellCoefficients

logger = logging.getLogger(__name__)

SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class PureState:
    num_parties: int
    amplitudes: np.ndarray
    local_dim: int = 2
    label: str = ""
    degenerate: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.local_dim ** self.num_parties,):
            raise ValueError(f"expected {self.local_dim ** self.num_parties} amplitudes, got {amps.shape}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalized (norm {norm!r})")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_vector(cls, vector, num_parties: int, label: str = "", **kw) -> "PureState":
        v = np.asarray(vector, dtype=complex)
        return cls(num_parties, v / np.linalg.norm(v), label=label, **kw)

    def amplitude(self, bits: str) -> complex:
        return complex(self.amplitudes[int(bits, 2)])

    def real_amplitudes(self) -> np.ndarray:
        if np.max(np.abs(self.amplitudes.imag)) > 1e-12:
            raise ValueError("state has complex amplitudes")
        return self.amplitudes.real.copy()


@dataclass(frozen=True)
class QubitObservable:
    """Dichotomic qubit observable: ``Z``, ``X``, ``D`` or ``Angle(theta)``."""

    label: str
    theta: float | None = None

    @property
    def matrix(self) -> np.ndarray:
        if self.label == "Z":
            return SIGMA_Z
        if self.label == "X":
            return SIGMA_X
        if self.label == "D":
            return (SIGMA_Z + SIGMA_X) / math.sqrt(2.0)
        if self.label == "Angle":
            return math.cos(self.theta) * SIGMA_Z + math.sin(self.theta) * SIGMA_X
        raise ValueError(f"unknown observable {self.label!r}")

    @classmethod
    def angle(cls, theta: float) -> "QubitObservable":
        return cls("Angle", float(theta))


Z = QubitObservable("Z")
X = QubitObservable("X")
D = QubitObservable("D")
ZXD = (Z, X, D)


def angle_observable(theta: float) -> np.ndarray:
    return QubitObservable.angle(theta).matrix


# --------------------------------------------------------------------------
# states


def w_state(n: int) -> PureState:
    vec = np.zeros(2 ** n)
    for k in range(n):
        vec[1 << k] = 1.0
    return PureState.from_vector(vec, n, label=f"W{n}")


def make_state(kind: str, **params) -> PureState:
    """Build one of the target states.

    ``kind`` is ``"W3"``, ``"W4"``, ``"PsiLambda"`` (parameter ``lam``) or
    ``"BellEigenstate"`` (parameters ``theta0``, ``theta1`` or per-party
    ``angles``, and optionally ``inequality``).

    ``PsiLambda`` puts the weight ``lam`` on ``|001>``, i.e. on party C. At
    ``lam = 1`` it is the same vector as ``W3``; no relabeling of qubits is
    needed with the convention used here.

    ``BellEigenstate`` is the top eigenvector of :func:`bell_operator`; the
    global phase makes the largest amplitude real and positive, and
    ``degenerate`` is set when the top eigenvalue is not simple.
    """
    if kind == "W3":
        return w_state(3)
    if kind == "W4":
        return w_state(4)
    if kind == "PsiLambda":
        lam = float(params["lam"])
        if not 0.0 < lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {lam}")
        vec = np.zeros(8)
        vec[0b100] = vec[0b010] = 1.0
        vec[0b001] = lam
        return PureState.from_vector(vec, 3, label=f"PsiLambda({lam:g})")
    if kind == "BellEigenstate":
        from .bell import TRANSLATION_INVARIANT_INEQUALITY

        ineq = params.get("inequality", TRANSLATION_INVARIANT_INEQUALITY)
        angles = params.get("angles")
        if angles is None:
            angles = (params["theta0"], params["theta1"])
        _, state = top_eigenpair(bell_operator(ineq, angles))
        return state
    raise ValueError(f"unknown state kind {kind!r}")


def top_eigenpair(op: np.ndarray, num_parties: int = 3) -> tuple[float, PureState]:
    w, v = np.linalg.eigh(op)
    vec = v[:, -1].astype(complex)
    k = int(np.argmax(np.abs(vec)))
    vec = vec * (abs(vec[k]) / vec[k])
    degenerate = len(w) > 1 and (w[-1] - w[-2]) < DEGENERACY_TOL
    if degenerate:
        logger.warning("top eigenvalue %.12g is degenerate", w[-1])
    return float(w[-1]), PureState.from_vector(vec, num_parties, label="BellEigenstate",
                                               degenerate=bool(degenerate))


# --------------------------------------------------------------------------
# correlators and behaviors


def _as_matrix(obs) -> np.ndarray | None:
    if obs is None:
        return None
    if isinstance(obs, QubitObservable):
        return obs.matrix
    return np.asarray(obs)


def correlator(state: PureState, assignment: Sequence) -> float:
    """``<psi| O_1 x ... x O_n |psi>``; ``None`` entries are identities."""
    if len(assignment) != state.num_parties:
        raise ValueError(f"assignment has {len(assignment)} slots for {state.num_parties} parties")
    d = state.local_dim
    psi = state.amplitudes.reshape((d,) * state.num_parties)
    phi = psi
    for p, obs in enumerate(assignment):
        mat = _as_matrix(obs)
        if mat is None:
            continue
        if mat.shape != (d, d):
            raise ValueError(f"observable for party {PARTY_NAMES[p]} has shape {mat.shape}")
        phi = np.moveaxis(np.tensordot(mat, phi, axes=([1], [p])), 0, p)
    value = np.vdot(psi.ravel(), phi.ravel())
    if abs(value.imag) > 1e-12:
        raise ValueError(f"correlator has imaginary part {value.imag:.3g}")
    return float(value.real)


@dataclass
class Behavior:
    """Correlator table: assignment (measurement index or ``None`` per party) -> value."""

    scenario: Scenario
    entries: dict = field(default_factory=dict)
    body_limit: int | None = None

    def __post_init__(self):
        ident = (None,) * self.scenario.num_parties
        self.entries.setdefault(ident, 1.0)
        if abs(self.entries[ident] - 1.0) > 1e-15:
            raise ValueError("the all-identity entry must be 1")
        for key, value in self.entries.items():
            if not -1.0 - 1e-12 <= value <= 1.0 + 1e-12:
                raise ValueError(f"correlator {key} = {value} outside [-1, 1]")
            if self.body_limit is not None and _body(key) > self.body_limit:
                raise ValueError(f"entry {key} exceeds body limit {self.body_limit}")

    def __getitem__(self, assignment) -> float:
        return self.entries[tuple(assignment)]

    def __len__(self):
        return len(self.entries)

    def items(self):
        return self.entries.items()

    def monomial_values(self) -> dict[Monomial, float]:
        return {monomial_from_assignment(k): v for k, v in self.entries.items()}

    def truncated(self, body_limit: int) -> "Behavior":
        kept = {k: v for k, v in self.entries.items() if _body(k) <= body_limit}
        return Behavior(self.scenario, kept, body_limit)

    def scaled(self, factor: float) -> "Behavior":
        """Mix with white noise: every non-identity correlator times ``factor``."""
        out = {k: (v if _body(k) == 0 else factor * v) for k, v in self.entries.items()}
        return Behavior(self.scenario, out, self.body_limit)

    def permuted(self, perm: Sequence[int]) -> "Behavior":
        """Behavior seen after handing party ``q``'s devices to ``perm[q]``."""
        out = {}
        for key, value in self.entries.items():
            new = [None] * len(key)
            for q, m in enumerate(key):
                new[perm[q]] = m
            out[tuple(new)] = value
        return Behavior(self.scenario, out, self.body_limit)

    @staticmethod
    def mixture(parts: Sequence[tuple[float, "Behavior"]]) -> "Behavior":
        first = parts[0][1]
        keys = set(first.entries)
        for _, b in parts[1:]:
            if set(b.entries) != keys:
                raise ValueError("behaviors to mix must share their entries")
        out = {k: sum(w * b.entries[k] for w, b in parts) for k in keys}
        out[(None,) * first.scenario.num_parties] = 1.0
        return Behavior(first.scenario, out, first.body_limit)


def _body(key) -> int:
    return sum(m is not None for m in key)


def assignments(num_parties: int, num_meas: int, body_limit: int):
    """Every assignment with at most ``body_limit`` non-identity slots."""
    for key in itertools.product([None, *range(num_meas)], repeat=num_parties):
        if _body(key) <= body_limit:
            yield key


def behavior_of(state: PureState, observables: Sequence[QubitObservable] = ZXD,
                body_limit: int = 2) -> Behavior:
    scenario = Scenario(state.num_parties, tuple(o.label for o in observables))
    entries = {}
    for key in assignments(state.num_parties, len(observables), body_limit):
        entries[key] = correlator(state, [None if m is None else observables[m] for m in key])
    return Behavior(scenario, entries, body_limit)


def _target_of(kind: str, lam: float | None) -> PureState:
    if kind == "PsiLambda":
        return make_state("PsiLambda", lam=lam)
    return make_state(kind)


def ideal_behavior(kind: str, body_limit: int, lam: float | None = None) -> Behavior:
    """All correlators of ``Z, X, D`` up to ``body_limit`` bodies on a target state.

    Values come from :func:`correlator`; they are checked against the
    closed-form references and a mismatch raises ``AssertionError``.
    """
    limits = {"W3": (1, 2), "PsiLambda": (1, 2), "W4": (1, 3)}
    if kind not in limits:
        raise ValueError(f"unknown behavior kind {kind!r}")
    lo, hi = limits[kind]
    if not lo <= body_limit <= hi:
        raise ValueError(f"body_limit for {kind} must be in [{lo}, {hi}]")
    behavior = behavior_of(_target_of(kind, lam), ZXD, body_limit)
    closed = closed_form_behavior(kind, lam)
    for key, value in behavior.items():
        ref = closed.get(key)
        if ref is not None and abs(ref - value) > 1e-12:
            raise AssertionError(f"{kind} correlator {key}: oracle {value!r} vs closed form {ref!r}")
    return behavior


# --------------------------------------------------------------------------
# closed-form references


_R2 = math.sqrt(2.0)
_W3_ONE = {"Z": 1 / 3, "X": 0.0, "D": 1 / (3 * _R2)}
_W3_TWO = {"ZZ": -1 / 3, "XZ": 0.0, "DZ": -1 / (3 * _R2), "XX": 2 / 3, "DX": _R2 / 3, "DD": 1 / 6}
_W4_ONE = {"Z": 1 / 2, "X": 0.0, "D": 1 / (2 * _R2)}
_W4_TWO = {"ZZ": 0.0, "XX": 1 / 2, "DD": 1 / 4, "XZ": 0.0, "DX": 1 / (2 * _R2), "DZ": 0.0}
_W4_THREE = {"ZZZ": -1 / 2, "XXX": 0.0, "DDD": 1 / (2 * _R2), "XZZ": 0.0, "DZZ": -1 / (2 * _R2),
             "XXZ": 1 / 2, "DXX": 1 / (2 * _R2), "DDZ": 0.0, "DDX": 1 / 2, "DXZ": 1 / (2 * _R2)}


def _psi_lambda_tables(lam: float):
    s = lam ** 2 + 2
    z_ab = lam ** 2 / s
    z_c = (2 - lam ** 2) / s
    # pair (A, B)
    zz_ab = (lam ** 2 - 2) / s
    xx_ab = 2 / s
    ab = {"ZZ": zz_ab, "DZ": (lam ** 2 - 2) / (_R2 * s), "XX": xx_ab,
          "DD": lam ** 2 / (2 * s), "XZ": 0.0, "DX": xx_ab / _R2}
    # pair (m, C) with m in {A, B}; keys are (letter on m, letter on C)
    zz_c = -lam ** 2 / s
    xx_c = 2 * lam / s
    mc = {("Z", "Z"): zz_c, ("Z", "D"): -_R2 * lam ** 2 / (2 * s), ("X", "X"): xx_c,
          ("X", "D"): _R2 * lam / s, ("D", "Z"): -_R2 * lam ** 2 / (2 * s),
          ("Z", "X"): 0.0, ("X", "Z"): 0.0, ("D", "X"): xx_c / _R2,
          ("D", "D"): (zz_c + xx_c) / 2}
    return z_ab, z_c, ab, mc


def closed_form_behavior(kind: str, lam: float | None = None) -> dict:
    """Correlators as printed in closed form, keyed like :class:`Behavior`."""
    labels = "ZXD"
    table = {}
    if kind in ("W3", "W4"):
        n = 3 if kind == "W3" else 4
        one, two = (_W3_ONE, _W3_TWO) if kind == "W3" else (_W4_ONE, _W4_TWO)
        three = {} if kind == "W3" else _W4_THREE
        for key in assignments(n, 3, 3 if kind == "W4" else 2):
            letters = "".join(sorted(labels[m] for m in key if m is not None))
            if not letters:
                table[key] = 1.0
            else:
                table[key] = {1: one, 2: two, 3: three}[len(letters)][letters]
        return table
    if kind == "PsiLambda":
        z_ab, z_c, ab, mc = _psi_lambda_tables(lam)
        for key in assignments(3, 3, 2):
            slots = [(p, labels[m]) for p, m in enumerate(key) if m is not None]
            if not slots:
                table[key] = 1.0
            elif len(slots) == 1:
                p, o = slots[0]
                z = z_c if p == 2 else z_ab
                table[key] = {"Z": z, "X": 0.0, "D": z / _R2}[o]
            else:
                (p, o1), (q, o2) = slots
                if q == 2:
                    table[key] = mc[(o1, o2)]
                else:
                    table[key] = ab["".join(sorted(o1 + o2))]
        return table
    raise ValueError(f"no closed form for {kind!r}")


# --------------------------------------------------------------------------
# SWAP circuit


def _check_involution(op: np.ndarray, name: str) -> None:
    eye = np.eye(op.shape[0])
    if np.linalg.norm(op @ op - eye) > 1e-9:
        raise ValueError(f"{name} does not square to the identity")


def swap_circuit_state(state, z_ops: Sequence[np.ndarray], x_ops: Sequence[np.ndarray]) -> np.ndarray:
    """Ancilla density matrix produced by the SWAP circuit.

    Each party runs ``H``, controlled-``Z``, ``H``, controlled-``X`` with its
    ancilla (prepared in ``|0>``) as control. ``state`` may be a
    :class:`PureState` or a raw vector over the product of the operators'
    local spaces, which allows purified mixed inputs.
    """
    z_ops = [np.asarray(z) for z in z_ops]
    x_ops = [np.asarray(x) for x in x_ops]
    n = len(z_ops)
    for p in range(n):
        _check_involution(z_ops[p], f"Z operator of party {PARTY_NAMES[p]}")
        _check_involution(x_ops[p], f"X operator of party {PARTY_NAMES[p]}")
    dims = [z.shape[0] for z in z_ops]
    psi = np.asarray(getattr(state, "amplitudes", state), dtype=complex)
    if psi.size != int(np.prod(dims)):
        raise ValueError("state dimension does not match the local operators")
    # tensor layout: ancillas 0..n-1, then systems n..2n-1
    anc0 = np.zeros((2,) * n)
    anc0[(0,) * n] = 1.0
    t = np.tensordot(anc0, psi.reshape(dims), axes=0)
    for p in range(n):
        d = dims[p]
        proj0 = np.diag([1.0, 0.0])
        proj1 = np.diag([0.0, 1.0])
        cz = np.kron(proj0, np.eye(d)) + np.kron(proj1, z_ops[p])
        cx = np.kron(proj0, np.eye(d)) + np.kron(proj1, x_ops[p])
        h = np.kron(HADAMARD, np.eye(d))
        gate = (cx @ h @ cz @ h).reshape(2, d, 2, d)
        t = np.tensordot(gate, t, axes=([2, 3], [p, n + p]))
        t = np.moveaxis(t, [0, 1], [p, n + p])
    mat = t.reshape(2 ** n, -1)
    return mat @ mat.conj().T


def swap_circuit_reference(state, z_ops: Sequence[np.ndarray], x_ops: Sequence[np.ndarray],
                           target: PureState) -> float:
    """Fidelity ``<target| rho_swap |target>`` by direct circuit simulation."""
    rho = swap_circuit_state(state, z_ops, x_ops)
    t = target.amplitudes
    return float(np.real(np.vdot(t, rho @ t)))


def maximally_mixed_purification(n: int) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Purification of ``I/2^n`` with Pauli ``Z``/``X`` acting on the first qubit of each party."""
    bell = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0)
    psi = bell
    for _ in range(n - 1):
        psi = np.kron(psi, bell)
    z = [np.kron(SIGMA_Z, np.eye(2))] * n
    x = [np.kron(SIGMA_X, np.eye(2))] * n
    return psi, z, x


def rotation_y(delta: float) -> np.ndarray:
    """``exp(-i delta sigma_y / 2)``, which maps the observable at angle ``t`` to angle ``t + delta``."""
    c, s = math.cos(delta / 2.0), math.sin(delta / 2.0)
    return np.array([[c, -s], [s, c]])


def rotate_state(state: PureState, delta: float) -> PureState:
    """Apply :func:`rotation_y` to every qubit of ``state``."""
    op = np.ones((1, 1))
    for _ in range(state.num_parties):
        op = np.kron(op, rotation_y(delta))
    return PureState(state.num_parties, op @ state.amplitudes, label=f"{state.label}@Ry({delta:.6g})",
                     degenerate=state.degenerate)


@dataclass
class SwapFrame:
    """Ideal two-setting realization rotated so that measurement 1 is ``sigma_x``.

    In this frame measurement 0 sits at angle ``pi/2 - phi`` with
    ``phi = theta1 - theta0``, so ``sigma_z = (M0 - cos(phi) M1) / sin(phi)``.
    ``state`` is the optimal state expressed in the same frame.
    """

    phi: float
    delta: float
    state: PureState
    observables: tuple[np.ndarray, np.ndarray, np.ndarray]   # M0, M1 and sigma_z in the new frame


def swap_frame(theta0: float, theta1: float, state: PureState, tol: float = 1e-9) -> SwapFrame:
    """Rotate the optimal qubit realization into the frame used by the SWAP circuit."""
    phi = theta1 - theta0
    if abs(math.sin(phi)) < tol:
        raise ValueError(f"degenerate measurement angles: sin(theta1 - theta0) = {math.sin(phi):.3g}")
    delta = math.pi / 2.0 - theta1
    rotated = rotate_state(state, delta)
    ops = (angle_observable(theta0 + delta), angle_observable(math.pi / 2.0), SIGMA_Z)
    return SwapFrame(phi, delta, rotated, ops)


# --------------------------------------------------------------------------
# Bell operators


def _angle_table(angles, num_meas: int = 2):
    arr = np.asarray(angles, dtype=float)
    if arr.ndim == 1:
        arr = np.tile(arr, (3, 1))
    if arr.shape != (3, num_meas):
        raise ValueError(f"angles must be ({num_meas},) or (3, {num_meas}), got {arr.shape}")
    return arr


def bell_operator(ineq: BellCoefficients, angles) -> np.ndarray:
    """Operator whose expectation is the Bell value for qubit measurements.

    ``angles`` is a shared ``(theta0, theta1, ...)`` or a per-party table;
    measurement ``j`` of party ``i`` is ``cos(t) sigma_z + sin(t) sigma_x``.
    """
    table = _angle_table(angles, ineq.num_measurements)
    realization = [[angle_observable(t) for t in row] for row in table]
    op = np.zeros((8, 8))
    for mono, coeff in ineq.terms().items():
        op = op + float(coeff) * monomial_matrix(mono, realization).real
    return (op + op.T) / 2


@dataclass
class Violation:
    value: float
    angles: np.ndarray
    state: PureState
    lift_improved: bool = False


def _top(ineq, angles) -> float:
    return float(np.linalg.eigvalsh(bell_operator(ineq, angles))[-1])


def maximize_violation(ineq: BellCoefficients, grid: int = 64, tol: float = 1e-6,
                       lift: bool = True, fix_gauge: bool = True) -> Violation:
    """Largest qubit value of a two-setting expression with shared angles.

    A ``grid x grid`` scan of ``[-pi/2, pi/2]^2`` is refined with Nelder-Mead.
    The value is invariant under a common rotation of all angles; with
    ``fix_gauge`` the rotation is chosen so that the optimal eigenvector has
    equal weight on ``|000>`` and ``|111>``.
    """
    if ineq.num_measurements != 2:
        raise ValueError("maximize_violation handles two measurements per party")
    if ineq.is_zero():
        return Violation(0.0, np.zeros(2), make_state("W3"))
    ts = np.linspace(-np.pi / 2, np.pi / 2, grid)
    best, start = -np.inf, None
    for t0 in ts:
        for t1 in ts:
            v = _top(ineq, (t0, t1))
            if v > best:
                best, start = v, (t0, t1)
    res = minimize(lambda t: -_top(ineq, t), start, method="Nelder-Mead",
                   options={"xatol": tol, "fatol": 1e-13, "maxiter": 4000})
    theta = np.asarray(res.x)
    value = -float(res.fun)

    lifted = False
    if lift:
        per_party = np.tile(theta, 3)
        res6 = minimize(lambda t: -_top(ineq, t.reshape(3, 2)), per_party, method="Nelder-Mead",
                        options={"xatol": tol, "fatol": 1e-13, "maxiter": 20000})
        if -res6.fun > value + 1e-7 * max(1.0, abs(value)):
            lifted = True
            logger.warning("per-party angles improve the symmetric optimum: %.9f > %.9f",
                           -res6.fun, value)

    if fix_gauge:
        theta = _fix_gauge(ineq, theta)
        value = _top(ineq, theta)
    _, state = top_eigenpair(bell_operator(ineq, theta))
    return Violation(value, theta, state, lifted)


def _fix_gauge(ineq, theta):
    # conjugating by sigma_z maps theta -> -theta without changing the value,
    # so both mirror families are searched
    roots = _gauge_roots(ineq, np.asarray(theta)) + _gauge_roots(ineq, -np.asarray(theta))
    if not roots:
        return np.asarray(theta)
    return min(roots, key=lambda c: (round(abs(c[1]), 9), c[0]))


def _gauge_roots(ineq, theta):
    def rotated(delta):
        return theta + delta

    def imbalance(delta):
        w, v = np.linalg.eigh(bell_operator(ineq, rotated(delta)))
        vec = v[:, -1]
        return vec[0] ** 2 - vec[7] ** 2, vec[0] * vec[7]

    deltas = np.linspace(-np.pi, np.pi, 721)
    vals = [imbalance(d)[0] for d in deltas]
    roots = []
    for a, b, fa, fb in zip(deltas[:-1], deltas[1:], vals[:-1], vals[1:]):
        if fa == 0 or fa * fb < 0:
            r = brentq(lambda d: imbalance(d)[0], a, b, xtol=1e-13)
            cand = rotated(r)
            if imbalance(r)[1] > 0 and np.all(np.abs(cand) <= np.pi / 2):
                roots.append(cand)
    return roots
