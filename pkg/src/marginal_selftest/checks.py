"""Battery of qubit-oracle checks against closed-form references.

:func:`oracle_check` returns one :class:`CheckResult` per item. The battery
covers the correlator tables of the three target families, the soundness of
the symbolic SWAP fidelity against direct circuit simulation, and the qubit
side of the translation-invariant Bell expression.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bell import TRANSLATION_INVARIANT_INEQUALITY, local_bound
from .oracle import (SIGMA_X, SIGMA_Z, ZXD, behavior_of, closed_form_behavior, make_state, maximize_violation,
                     swap_circuit_reference)
from .algebra import evaluate_poly
from .relaxation import swap_fidelity_polynomial

CLOSED_FORM_TOL = 1e-12
SWAP_TOL = 1e-9
LAMBDAS = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
RANDOM_REALIZATIONS = 100

# qubit optimum of the translation-invariant expression and its eigenvector
REFERENCE_VIOLATION = 10.02
REFERENCE_ANGLES = (-1.1946, 0.0957)
REFERENCE_AMPLITUDES = {"000": -0.08, "111": -0.08, "001": -0.5628, "010": -0.5628, "100": -0.5628,
                        "011": 0.1108, "110": 0.1108, "101": 0.1108}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _timed(name, fn) -> CheckResult:
    t0 = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:   # a crashing check is a failed check, reported with its message
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


def _closed_form(kind: str, lam: float | None = None):
    state = make_state(kind, lam=lam) if kind == "PsiLambda" else make_state(kind)
    body = 3 if kind == "W4" else 2
    oracle = behavior_of(state, ZXD, body)
    closed = closed_form_behavior(kind, lam)
    diff = max(abs(oracle[k] - v) for k, v in closed.items())
    return diff <= CLOSED_FORM_TOL, f"max deviation {diff:.1e} over {len(closed)} correlators"


def _ideal_swap(kind: str, lam: float | None = None):
    target = make_state(kind, lam=lam) if kind == "PsiLambda" else make_state(kind)
    n = target.num_parties
    poly = swap_fidelity_polynomial(target, [0] * n, [1] * n)
    realization = [[SIGMA_Z, SIGMA_X]] * n
    symbolic = evaluate_poly(poly, realization, target)
    circuit = swap_circuit_reference(target, [SIGMA_Z] * n, [SIGMA_X] * n, target)
    diff = abs(symbolic - circuit)
    return diff <= SWAP_TOL, f"functional {symbolic:.12f} vs circuit {circuit:.12f}"


def random_involution(dim: int, rng: np.random.Generator) -> np.ndarray:
    """``U diag(+-1) U^dagger`` with a Haar-like random unitary; both signs occur."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    signs = np.ones(dim)
    signs[: rng.integers(1, dim)] = -1.0
    return (q * signs) @ q.conj().T


def _random_swap(count: int = RANDOM_REALIZATIONS, seed: int = 7):
    rng = np.random.default_rng(seed)
    worst = 0.0
    targets = [make_state("W3"), make_state("PsiLambda", lam=0.5), make_state("W4")]
    polys = [swap_fidelity_polynomial(t, [0] * t.num_parties, [1] * t.num_parties) for t in targets]
    for k in range(count):
        idx = k % 3 if k % 10 == 9 else k % 2   # mostly three parties, every tenth run on the four-party target
        target, poly = targets[idx], polys[idx]
        n = target.num_parties
        dims = [2] * n if n == 4 else [int(d) for d in rng.integers(2, 4, size=n)]
        z = [random_involution(d, rng) for d in dims]
        x = [random_involution(d, rng) for d in dims]
        psi = rng.normal(size=int(np.prod(dims))) + 1j * rng.normal(size=int(np.prod(dims)))
        psi /= np.linalg.norm(psi)
        symbolic = evaluate_poly(poly, [[z[p], x[p]] for p in range(n)], psi)
        circuit = swap_circuit_reference(psi, z, x, target)
        worst = max(worst, abs(symbolic - circuit))
    return worst <= SWAP_TOL, f"{count} random realizations, max deviation {worst:.1e}"


def _local_bound():
    value = local_bound(TRANSLATION_INVARIANT_INEQUALITY)
    return value == 9, f"deterministic maximum {value}"


def _violation():
    v = maximize_violation(TRANSLATION_INVARIANT_INEQUALITY)
    ok_value = abs(v.value - REFERENCE_VIOLATION) <= 0.01
    ok_angles = all(abs(a - b) <= 1e-3 for a, b in zip(v.angles, REFERENCE_ANGLES))
    amps = v.state.real_amplitudes()
    ref = np.array([REFERENCE_AMPLITUDES[format(i, "03b")] for i in range(8)])
    sign = 1.0 if float(amps @ ref) >= 0 else -1.0
    dev = float(np.max(np.abs(sign * amps - ref)))
    detail = (f"B = {v.value:.6f}, angles = ({v.angles[0]:.5f}, {v.angles[1]:.5f}), "
              f"amplitude deviation {dev:.1e}")
    return ok_value and ok_angles and dev <= 1e-3, detail


def oracle_check(random_count: int = RANDOM_REALIZATIONS) -> list[CheckResult]:
    """Run every check; never raises."""
    results = [_timed("closed form W3", lambda: _closed_form("W3")),
               _timed("closed form W4", lambda: _closed_form("W4"))]
    for lam in LAMBDAS:
        results.append(_timed(f"closed form psi_lambda({lam:g})", lambda lam=lam: _closed_form("PsiLambda", lam)))
    results.append(_timed("swap functional W3", lambda: _ideal_swap("W3")))
    results.append(_timed("swap functional W4", lambda: _ideal_swap("W4")))
    for lam in LAMBDAS:
        results.append(_timed(f"swap functional psi_lambda({lam:g})", lambda lam=lam: _ideal_swap("PsiLambda", lam)))
    results.append(_timed("swap functional random realizations", lambda: _random_swap(random_count)))
    results.append(_timed("local bound of the Bell expression", _local_bound))
    results.append(_timed("qubit maximum, angles and eigenvector", _violation))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  result  seconds  detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'pass' if r.passed else 'FAIL':6}  {r.seconds:7.2f}  {r.detail}")
    return "\n".join(lines)
