"""Independent checks of solver output and dual read-outs.

:func:`verify_certificate` recomputes every residual of a solution from the
problem data alone. Its ``certified_bound`` follows from the dual side only:
for any feasible ``x``,

    c^T x = <F(x), Y> - <C, Y> + mu^T b + nu^T h + r^T x
          >= -<C, Y> + mu^T b + nu^T h - ||r||_1 max_i |x_i|

where ``Y`` is the PSD part of the reported dual blocks, ``mu`` and ``nu``
are the multipliers of the equalities and of the rows added by facial
reduction, and ``r`` is the stationarity residual. Moment variables are
expectations of products of unitaries, so ``|x_i| <= 1``.

:func:`exposing_certificate` and :func:`extract_dual_inequality` read a
Bell-type inequality off the dual multipliers of behavior constraints.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from ..bell import PERMUTATION, BellCoefficients
from .problem import SdpProblem, SdpSolution

DUAL_PSD_TOL = 1e-8


@dataclass
class CertificateReport:
    """Machine-readable outcome of :func:`verify_certificate`.

    Values are in the problem's own sense. ``certified_bound`` is a lower
    bound on the optimum of a minimization (an upper bound for a
    maximization); it is rigorous when ``face_exact`` holds and the moment
    variables obey ``|x_i| <= variable_bound``.
    """

    status: str
    primal_value: float
    dual_value: float
    recomputed_dual_value: float
    relative_gap: float
    equality_residual: float
    equality_tolerance: float
    primal_min_eigenvalues: list
    dual_min_eigenvalues: list
    stationarity: float
    certified_bound: float
    variable_bound: float
    face_exact: bool
    face: dict | None = None
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        data = asdict(self)
        data["passed"] = self.passed
        return data


def _psd_part(Y: np.ndarray) -> np.ndarray:
    lam, U = np.linalg.eigh(0.5 * (Y + Y.T))
    return (U * np.maximum(lam, 0.0)) @ U.T


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]) if M.size else 0.0


def verify_certificate(problem: SdpProblem, solution: SdpSolution, feas_tol: float = 1e-8,
                       gap_tol: float = 1e-7, stationarity_tol: float = 1e-6,
                       variable_bound: float = 1.0) -> CertificateReport:
    """Recompute residuals and a dual-side bound without trusting the solver.

    Never raises on bad data; every failed check is listed in ``failures``.
    """
    x = np.asarray(solution.x, dtype=float)
    failures = []

    # primal side
    eq_res = 0.0
    eq_tol = feas_tol
    if len(problem.eq_rhs):
        eq_res = float(np.max(np.abs(problem.eq_matrix @ x - problem.eq_rhs)))
        eq_tol = feas_tol * (1.0 + float(np.max(np.abs(problem.eq_rhs))))
    if eq_res > eq_tol:
        failures.append(f"equality residual {eq_res:.2e} exceeds {eq_tol:.2e}")
    primal_eigs = []
    for k, blk in enumerate(problem.blocks):
        lam = np.linalg.eigvalsh(blk.evaluate(x)) if blk.size else np.zeros(1)
        primal_eigs.append(float(lam[0]))
        # eigenvalues are compared with the block scale, like the solver's residuals
        tol = feas_tol * max(1.0, float(lam[-1]))
        if lam[0] < -tol:
            failures.append(f"block {k} has eigenvalue {lam[0]:.2e} below -{tol:.1e}")

    # dual side
    dual_eigs = [_min_eig(Y) for Y in solution.dual_blocks]
    for k, lam in enumerate(dual_eigs):
        if lam < -DUAL_PSD_TOL:
            failures.append(f"dual block {k} has eigenvalue {lam:.2e} below -{DUAL_PSD_TOL:.0e}")
    Ys = [_psd_part(Y) for Y in solution.dual_blocks]
    mu = np.asarray(solution.multipliers, dtype=float)
    res = problem.c.copy()
    for blk, Y in zip(problem.blocks, Ys):
        res -= blk.adjoint(Y)
    if mu.size:
        res -= problem.eq_matrix.T @ mu
    value = -sum(float(np.vdot(blk.const, Y)) for blk, Y in zip(problem.blocks, Ys))
    value += float(problem.eq_rhs @ mu) if mu.size else 0.0
    face = solution.face
    face_exact = True
    face_summary = None
    if face is not None:
        face_summary = face.summary()
        face_exact = bool(face.exact)
        nu = np.asarray(solution.extra_multipliers, dtype=float)
        if face.num_extra:
            res -= face.extra_rows.T @ nu
            value += float(face.extra_rhs @ nu)
    stationarity = float(np.max(np.abs(res))) if res.size else 0.0
    scale = 1.0 + float(np.max(np.abs(problem.c))) if problem.c.size else 1.0
    if stationarity > stationarity_tol * scale:
        failures.append(f"stationarity residual {stationarity:.2e} exceeds {stationarity_tol * scale:.2e}")
    bound = value + problem.offset - float(np.sum(np.abs(res))) * variable_bound
    dual_value = value + problem.offset
    primal_internal = float(problem.c @ x + problem.offset)
    if problem.maximize:
        bound, dual_value = -bound, -dual_value
    rel_gap = abs(solution.primal_value - solution.dual_value) / (
        1.0 + abs(solution.primal_value) + abs(solution.dual_value))
    if solution.ok and rel_gap > gap_tol:
        failures.append(f"relative gap {rel_gap:.2e} exceeds {gap_tol:.0e}")
    # weak duality in the internal minimization sense
    dual_internal = -dual_value if problem.maximize else dual_value
    if dual_internal > primal_internal + max(gap_tol, rel_gap) * (1.0 + abs(primal_internal)) + stationarity * scale:
        failures.append("weak duality violated: dual value exceeds primal value")
    if not face_exact:
        note = "face found numerically; certified bound holds up to the face accuracy"
        face_summary = dict(face_summary or {}, note=note)
    return CertificateReport(
        status=solution.status, primal_value=float(solution.primal_value),
        dual_value=float(solution.dual_value), recomputed_dual_value=float(dual_value),
        relative_gap=float(rel_gap), equality_residual=eq_res, equality_tolerance=eq_tol,
        primal_min_eigenvalues=primal_eigs, dual_min_eigenvalues=dual_eigs,
        stationarity=stationarity, certified_bound=float(bound), variable_bound=variable_bound,
        face_exact=face_exact, face=face_summary, failures=failures)


# --------------------------------------------------------------------------
# dual read-outs


def exposing_certificate(problem: SdpProblem, gap_tol: float = 3e-8, feas_tol: float = 1e-8) -> SdpSolution:
    """Dual of the eigenvalue-margin problem, expressed on ``problem``.

    When ``problem`` has no strictly feasible point the margin optimum is
    zero and the returned ``dual_blocks`` (``Y >= 0``, unit total trace) and
    ``multipliers`` (``mu``) satisfy ``A^*(Y) + E^T mu = 0``. Every feasible
    point then obeys ``mu^T E x <= <C, Y>``: a linear inequality on the
    constrained data that is tight at ``b``. Diverging dual multipliers of
    the original problem point in this direction.

    The optimal dual set is not a single point, and the interior-point path
    drifts inside it as the gap closes; the returned certificate is the
    first iterate meeting ``gap_tol`` and ``feas_tol``.
    """
    from .facial import solve_margin

    aux, sol = solve_margin(problem, gap_tol, feas_tol)
    m = problem.num_vars
    k = len(problem.blocks)
    margin = float(sol.x[m])
    return SdpSolution(sol.status, sol.x[:m], margin, sol.dual_value, sol.dual_blocks[:k],
                       np.asarray(sol.multipliers, dtype=float), sol.iterations,
                       sol.primal_infeasibility, sol.dual_infeasibility, sol.history)


class TemplateMismatch(ValueError):
    """Equality labels do not carry the correlator families of the template."""


def family_sizes(kind: str = PERMUTATION, num_measurements: int = 3, num_parties: int = 3) -> dict[str, int]:
    """Number of correlators summed in each ``S_i`` / ``T_ij`` family."""
    if kind != PERMUTATION:
        raise TemplateMismatch(f"only the {PERMUTATION} template is supported, got {kind!r}")
    sizes = {}
    pairs = num_parties * (num_parties - 1) // 2
    for i in range(num_measurements):
        sizes[f"S{i}"] = num_parties
        for j in range(i, num_measurements):
            sizes[f"T{i}{j}"] = pairs if i == j else 2 * pairs
    return sizes


@dataclass
class DualInequality:
    """Bell-type inequality ``B(P) <= bound`` read off dual multipliers.

    ``raw`` holds the family coefficients at the solver's scale; ``normalized``
    divides by ``|alpha|``; ``guess`` rounds the normalized coefficients to
    integers. ``family_totals`` are the summed multipliers per family.
    """

    raw: BellCoefficients
    normalized: BellCoefficients
    guess: BellCoefficients
    bound: float
    normalized_bound: float
    family_totals: dict

    def to_json(self) -> dict:
        return {"raw": list(map(float, self.raw.as_tuple())),
                "normalized": list(map(float, self.normalized.as_tuple())),
                "guess": list(map(float, self.guess.as_tuple())),
                "bound": self.bound, "normalized_bound": self.normalized_bound,
                "family_totals": {k: float(v) for k, v in self.family_totals.items()},
                "order": ["alpha", "beta", "gamma", "lambda0", "lambda1", "lambda2",
                          "omega0", "omega1", "omega2"]}


def extract_dual_inequality(problem: SdpProblem, solution: SdpSolution, template: str = PERMUTATION,
                            ignore: tuple = ("face", "hermiticity", "bell")) -> DualInequality:
    """Aggregate equality multipliers into the ``S_i``/``T_ij`` template.

    The multipliers ``mu`` certify ``mu^T E x <= <C, Y>`` for every feasible
    point (see :func:`exposing_certificate`). A behavior row fixes one
    correlator, and after symmetrization one row stands for a whole family
    member; summing ``mu`` over a family and dividing by the family size gives
    the weight of that family in ``B``.

    Raises
    ------
    TemplateMismatch
        When the equality rows carry no family labels or a family is unknown.
    """
    labels = list(problem.eq_labels)
    if not labels or len(labels) != len(problem.eq_rhs):
        raise TemplateMismatch("equality constraints are not labeled with correlator families")
    sizes = family_sizes(template)
    mu = np.asarray(solution.multipliers, dtype=float)
    totals: dict[str, float] = defaultdict(float)
    for label, m in zip(labels, mu):
        fam = label.split("|", 1)[0]
        if fam in ignore:
            continue
        if fam not in sizes:
            raise TemplateMismatch(f"equality label {label!r} has no family of the {template} template")
        totals[fam] += float(m)
    if not totals:
        raise TemplateMismatch("no behavior constraint found")
    coeff = {fam: totals.get(fam, 0.0) / size for fam, size in sizes.items()}

    def make(c):
        return BellCoefficients.permutation_invariant(
            c["S0"], c["S1"], c["S2"], c["T00"], c["T11"], c["T22"], c["T01"], c["T02"], c["T12"])

    Ys = solution.dual_blocks
    bound = sum(float(np.vdot(blk.const, Y)) for blk, Y in zip(problem.blocks, Ys))
    raw = make(coeff)
    alpha = abs(coeff["S0"])
    scale = alpha if alpha > 0.0 else 1.0
    norm = {k: v / scale for k, v in coeff.items()}
    normalized = make(norm)
    normalized_bound = bound / scale
    guess = make({k: float(round(v)) for k, v in norm.items()})
    return DualInequality(raw, normalized, guess, bound, normalized_bound, dict(totals))
