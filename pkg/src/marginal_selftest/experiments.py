"""Experiment configurations, sweeps and result persistence.

Every experiment turns an :class:`ExperimentConfig` into a
:class:`ResultTable`. Sweep points are independent problems; they may run on
a thread pool, and rows are always ordered by parameter. Each row carries the
solver status, the duality gap and the outcome of an independent certificate
check.

Experiments
-----------
``w3``
    Fidelity bound for the W state from its noisy one- and two-body marginals.
``wlambda``
    Fidelity bound for the family ``psi_lambda`` (symmetric under A <-> B only).
``tibell``
    Fidelity bound from the value of a translation-invariant Bell expression,
    with localizing blocks that encode the rotated measurement.
``w4``
    Fidelity bound for the four-party W state from correlators up to a body limit.
``dual``
    Bell-type inequality read off the dual of the noiseless W-state problem.
``forced-zzz``
    Range of the three-body ``Z Z Z`` moment compatible with the W marginals.
``slice``
    Quantum (NPA) and local boundaries in a two-dimensional slice of behaviors.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import relaxation as rx
from .algebra import IDENTITY, OperatorPolynomial, PermutationGroup, Scenario, canonicalize, parse_monomial
from .bell import TRANSLATION_INVARIANT_INEQUALITY, local_bound
from .oracle import Behavior, ideal_behavior, make_state, maximize_violation, swap_frame
from .sdp import (Block, SdpProblem, SdpSolution, exposing_certificate, extract_dual_inequality,
                  solve, verify_certificate, write_sdpa)
from .sdp.facial import InfeasibleFace, margin_problem
from .sdp.solver import SolverOptions, _solve_direct

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXPERIMENTS = ("w3", "wlambda", "tibell", "w4", "dual", "forced-zzz", "slice")

# (relative gap, feasibility) per experiment; several of these problems have
# no strictly complementary solution, so tighter gaps can stall
DEFAULT_TOLERANCES = {
    "w3": (1e-6, 1e-8), "wlambda": (1e-6, 1e-8), "tibell": (1e-6, 1e-8), "w4": (1e-6, 1e-8),
    "dual": (1e-6, 1e-8), "forced-zzz": (1e-6, 1e-8), "slice": (1e-6, 1e-8),
}
DEFAULT_EPS = tuple(round(0.001 * k, 3) for k in range(11))
DEFAULT_LAMBDAS = tuple(round(0.1 * k, 1) for k in range(1, 11))
DEFAULT_VIOLATION_POINTS = 8
DEFAULT_W4_MAX_PARTIES = 2
MARGIN_TOL = 1e-6        # eigenvalue margin above -MARGIN_TOL counts as NPA-feasible
LOCAL_TOL = 1e-5         # relative slack for local-polytope membership (above the LP gap tolerance)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """One experiment run.

    Parameters
    ----------
    experiment : str
        One of :data:`EXPERIMENTS`.
    eps : list of float, optional
        Noise levels for ``w3``, ``w4`` and ``forced-zzz``; constraints are
        scaled by ``1 - eps``.
    lambdas : list of float, optional
        Weights of ``psi_lambda`` for ``wlambda``.
    violations : list of float, optional
        Bell values for ``tibell``; defaults to 8 points from the local bound
        to the qubit maximum.
    bodies : list of int
        Body limits of the ``w4`` correlators.
    symmetrize : bool
        Reduce by the party symmetry of the target.
    basis : dict
        Overrides: ``max_parties`` and ``extra`` (monomial strings such as
        ``"A0 A1"``) for the default basis, or ``manifest`` (path of a basis
        manifest written by an earlier run).
    tol_gap, tol_feas : float, optional
        Solver tolerances; per-experiment defaults when omitted.
    workers : int
        Concurrent sweep points.
    out : str, optional
        Output directory.
    export_sdpa : str, optional
        Also write every problem in SDPA sparse format to this path (an index
        is appended for sweeps).
    directions, bisection_tol : int, float
        Fan size and bisection tolerance of the ``slice`` scan.
    """

    experiment: str
    eps: list | None = None
    lambdas: list | None = None
    violations: list | None = None
    bodies: list = field(default_factory=lambda: [3])
    symmetrize: bool = True
    basis: dict = field(default_factory=dict)
    tol_gap: float | None = None
    tol_feas: float | None = None
    workers: int = 1
    out: str | None = None
    export_sdpa: str | None = None
    directions: int = 180
    bisection_tol: float = 1e-4
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        for name in ("eps", "lambdas", "violations", "bodies"):
            value = getattr(self, name)
            if value is not None:
                value = [float(v) if name != "bodies" else int(v) for v in value]
                if not value:
                    raise ConfigError(f"{name} must not be empty")
                setattr(self, name, value)
        if self.eps is not None and not all(0.0 <= e <= 1.0 for e in self.eps):
            raise ConfigError("every eps must lie in [0, 1]")
        if self.lambdas is not None and not all(0.0 < v <= 1.0 for v in self.lambdas):
            raise ConfigError("every lambda must lie in (0, 1]")
        if self.violations is not None and not all(math.isfinite(v) for v in self.violations):
            raise ConfigError("violations must be finite")
        if not all(b in (2, 3) for b in self.bodies):
            raise ConfigError("bodies must be 2 or 3")
        unknown = set(self.basis) - {"max_parties", "extra", "manifest"}
        if unknown:
            raise ConfigError(f"unknown basis overrides {sorted(unknown)}")
        for name in ("tol_gap", "tol_feas"):
            value = getattr(self, name)
            if value is not None and not 0.0 < float(value) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if int(self.workers) < 1:
            raise ConfigError("workers must be at least 1")
        if int(self.directions) < 1:
            raise ConfigError("directions must be at least 1")
        if not 0.0 < float(self.bisection_tol) < 1.0:
            raise ConfigError("bisection_tol must lie in (0, 1)")

    @property
    def tolerances(self) -> tuple[float, float]:
        gap, feas = DEFAULT_TOLERANCES[self.experiment]
        return (self.tol_gap or gap, self.tol_feas or feas)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigError("configuration needs an 'experiment' key")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


# --------------------------------------------------------------------------
# results


@dataclass
class ResultRow:
    params: dict
    value: float
    status: str
    gap: float
    relative_gap: float
    iterations: int = 0
    seconds: float = 0.0
    certificate_passed: bool | None = None
    certified_bound: float | None = None
    extra: dict = field(default_factory=dict)
    solution: dict | None = None

    @property
    def optimal(self) -> bool:
        return self.status == SdpSolution.OPTIMAL


@dataclass
class ResultTable:
    """Rows of one experiment, with a JSON report and the basis manifest."""

    experiment: str
    value_name: str
    rows: list
    report: dict = field(default_factory=dict)
    manifest: dict | None = None
    config: ExperimentConfig | None = None

    @property
    def all_optimal(self) -> bool:
        return bool(self.rows) and all(r.optimal for r in self.rows)

    def values(self) -> list:
        return [r.value for r in self.rows]

    def columns(self) -> list[str]:
        params = list(dict.fromkeys(k for r in self.rows for k in r.params))
        extra = list(dict.fromkeys(k for r in self.rows for k in r.extra))
        return params + [self.value_name, "status", "gap", "relative_gap", "iterations", "seconds",
                         "certificate_passed", "certified_bound"] + extra

    def write_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for r in self.rows:
                data = dict(r.params)
                data.update({self.value_name: r.value, "status": r.status, "gap": r.gap,
                             "relative_gap": r.relative_gap, "iterations": r.iterations,
                             "seconds": round(r.seconds, 3), "certificate_passed": r.certificate_passed,
                             "certified_bound": r.certified_bound})
                data.update(r.extra)
                writer.writerow([_csv_value(data.get(c)) for c in cols])

    def write(self, out) -> dict:
        """Write CSV, report, solution dumps and basis manifest into ``out``.

        Returns the paths written, keyed by kind.
        """
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.experiment.replace("-", "_")
        paths = {"csv": out / f"{stem}.csv", "report": out / f"{stem}_report.json"}
        self.write_csv(paths["csv"])
        report = {"experiment": self.experiment, "all_optimal": self.all_optimal,
                  "config": self.config.to_json() if self.config else None,
                  "rows": [dict(r.params, **{self.value_name: r.value, "status": r.status, "gap": r.gap})
                           for r in self.rows]}
        report.update(self.report)
        paths["report"].write_text(json.dumps(report, indent=1, default=_json_default))
        if self.manifest is not None:
            paths["manifest"] = out / f"{stem}_basis_manifest.json"
            paths["manifest"].write_text(json.dumps(self.manifest, indent=1))
        sol_dir = out / f"{stem}_solutions"
        dumps = [(k, r.solution) for k, r in enumerate(self.rows) if r.solution is not None]
        if dumps:
            sol_dir.mkdir(exist_ok=True)
            for k, dump in dumps:
                (sol_dir / f"row{k:03d}.json").write_text(json.dumps(dump, default=_json_default))
            paths["solutions"] = sol_dir
        return paths


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return str(obj)


def solution_dump(problem: SdpProblem, sol: SdpSolution) -> dict:
    """JSON-ready solution: named variables, value, gap, status and labeled multipliers."""
    names = problem.dictionary
    labels = problem.eq_labels or [f"row{j}" for j in range(len(problem.eq_rhs))]
    mu = np.asarray(sol.multipliers, dtype=float)
    return {
        "status": sol.status,
        "value": sol.primal_value,
        "dual_value": sol.dual_value,
        "gap": sol.gap,
        "relative_gap": sol.relative_gap,
        "sense": problem.sense,
        "x": {names.get(i, f"x{i}"): float(v) for i, v in enumerate(sol.x)},
        "multipliers": [{"label": lab, "value": float(v)} for lab, v in zip(labels, mu)],
        "face": sol.face.summary() if sol.face is not None else None,
    }


# --------------------------------------------------------------------------
# solving a row


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def solve_row(problem: SdpProblem, tol_gap: float, tol_feas: float, retry_exposed: bool = True) -> SdpSolution:
    """Solve after facial reduction; retry with numerical face rounds when not optimal."""
    try:
        sol = solve(problem, gap_tol=tol_gap, feas_tol=tol_feas, facial_reduction=True)
    except InfeasibleFace as exc:
        logger.warning("facial reduction proved infeasibility: %s", exc)
        return _failed(problem, SdpSolution.INFEASIBLE)
    except ValueError as exc:
        logger.warning("problem rejected: %s", exc)
        return _failed(problem, SdpSolution.INFEASIBLE)
    if not sol.ok and retry_exposed:
        try:
            alt = solve(problem, gap_tol=tol_gap, feas_tol=tol_feas, facial_reduction=True, exposed=True)
        except ValueError as exc:
            logger.info("retry with numerical face rounds failed: %s", exc)
            return sol
        if alt.ok or (np.isfinite(alt.relative_gap) and alt.relative_gap < sol.relative_gap):
            sol = alt
    return sol


def _failed(problem: SdpProblem, status: str) -> SdpSolution:
    return SdpSolution(status, np.full(problem.num_vars, np.nan), math.nan, math.nan, [],
                       np.zeros(len(problem.eq_rhs)), 0)


def _row(problem: SdpProblem, sol: SdpSolution, params: dict, seconds: float, tol_gap: float,
         tol_feas: float, extra: dict | None = None, value: float | None = None) -> ResultRow:
    cert_ok, bound = None, None
    if sol.dual_blocks:
        report = verify_certificate(problem, sol, feas_tol=tol_feas, gap_tol=tol_gap)
        cert_ok, bound = report.passed, report.certified_bound
        if not report.passed:
            logger.warning("certificate check failed for %s: %s", params, "; ".join(report.failures))
    return ResultRow(params, sol.primal_value if value is None else value, sol.status, sol.gap,
                     sol.relative_gap, sol.iterations, seconds, cert_ok, bound, dict(extra or {}),
                     solution_dump(problem, sol) if sol.dual_blocks else None)


def export_problems(target, problems: Sequence[SdpProblem]) -> list[str]:
    """Write problems in SDPA sparse format; sweeps get an index before the suffix."""
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    if len(problems) == 1:
        write_sdpa(problems[0], path)
        return [str(path)]
    written = []
    suffix = "".join(path.suffixes) or ".dat-s"
    base = path.name[: -len("".join(path.suffixes))] if path.suffixes else path.name
    for k, prob in enumerate(problems):
        target = path.with_name(f"{base}_{k:03d}{suffix}")
        write_sdpa(prob, target)
        written.append(str(target))
    return written


def _export(cfg: ExperimentConfig, problems: Sequence[SdpProblem]) -> list[str]:
    return export_problems(cfg.export_sdpa, problems) if cfg.export_sdpa else []


def _nonincreasing(values: Sequence[float], tol: float) -> bool:
    return all(b <= a + tol for a, b in zip(values, values[1:]))


# --------------------------------------------------------------------------
# relaxation set-ups


@dataclass
class FidelitySetup:
    """Moment structure and fidelity functional of one target."""

    structure: rx.MomentStructure
    functional: rx.FidelityFunctional
    target: object
    group: PermutationGroup | None

    def manifest(self) -> dict:
        return rx.structure_manifest(self.structure)


def _basis(cfg: ExperimentConfig, scenario: Scenario, poly: OperatorPolynomial, group,
           default_max_parties=None, default_extra=()) -> rx.MonomialBasis:
    overrides = cfg.basis
    if overrides.get("manifest"):
        with open(overrides["manifest"]) as fh:
            return rx.MonomialBasis.from_manifest(json.load(fh))
    extra = [parse_monomial(t) for t in overrides.get("extra", [])] or list(default_extra)
    max_parties = overrides.get("max_parties", default_max_parties)
    return rx.default_basis(scenario, poly.monomials(), group=group, max_parties=max_parties, extra=extra)


def _fidelity_setup(cfg: ExperimentConfig, target, scenario: Scenario, group, localizing=(),
                    z_specs=None, x_specs=None, default_max_parties=None, default_extra=()) -> FidelitySetup:
    n = scenario.num_parties
    z_specs = [0] * n if z_specs is None else z_specs
    x_specs = [1] * n if x_specs is None else x_specs
    group = group if cfg.symmetrize else None
    poly = rx.swap_fidelity_polynomial(target, z_specs, x_specs)
    basis = _basis(cfg, scenario, poly, group, default_max_parties, default_extra)
    st = rx.build_moment_structure(basis)
    for poly_p, loc_basis, label in localizing:
        st = rx.localizing_structure(st, poly_p, loc_basis, label)
    if group is not None:
        st = rx.symmetrize(st, group)
    f = rx.swap_fidelity(target, st, z_specs, x_specs)
    logger.info("basis of %d words (%d augmented), %d moment variables", len(basis),
                len(basis.augmented), st.num_vars)
    return FidelitySetup(st, f, target, group)


def w3_setup(cfg: ExperimentConfig) -> FidelitySetup:
    return _fidelity_setup(cfg, make_state("W3"), Scenario(3), PermutationGroup.symmetric(3))


def w4_setup(cfg: ExperimentConfig) -> FidelitySetup:
    return _fidelity_setup(cfg, make_state("W4"), Scenario(4), PermutationGroup.symmetric(4),
                           default_max_parties=DEFAULT_W4_MAX_PARTIES)


def wlambda_setup(cfg: ExperimentConfig, lam: float) -> FidelitySetup:
    swap_ab = PermutationGroup.generated([(1, 0, 2)], 3)
    return _fidelity_setup(cfg, make_state("PsiLambda", lam=lam), Scenario(3), swap_ab)


@dataclass
class TibellSetup(FidelitySetup):
    violation: object = None
    frame: object = None


def tibell_setup(cfg: ExperimentConfig) -> TibellSetup:
    """Two measurements per party plus the rotated observable ``M2``.

    ``M2`` plays the role of ``sigma_z`` in the SWAP circuit. Since
    ``sin(phi) sigma_z = M0 - cos(phi) M1`` holds for the optimal qubit
    measurements, each party gets a localizing block for
    ``M2 (M0 - cos(phi) M1) / sin(phi) >= 0``, which together with
    ``M2^2 = 1`` and the Hermiticity of the localized operator pins ``M2`` to
    that combination.
    """
    violation = maximize_violation(TRANSLATION_INVARIANT_INEQUALITY)
    frame = swap_frame(*violation.angles, violation.state)
    scenario = Scenario(3, ("M0", "M1", "M2"))
    c, s = math.cos(frame.phi), math.sin(frame.phi)
    localizing = []
    for p in range(3):
        poly = (OperatorPolynomial.letter(p, 2)
                * (OperatorPolynomial.letter(p, 0) - OperatorPolynomial.letter(p, 1, c)) * (1.0 / s))
        loc_basis = [IDENTITY] + [canonicalize([(p, k)]) for k in range(3)]
        localizing.append((poly, loc_basis, f"loc{p}"))
    base = _fidelity_setup(cfg, frame.state, scenario, PermutationGroup.cyclic(3), localizing,
                           z_specs=[2] * 3, x_specs=[1] * 3, default_extra=rx.same_party_products(scenario))
    return TibellSetup(base.structure, base.functional, base.target, base.group, violation, frame)


# --------------------------------------------------------------------------
# fidelity sweeps


def _fidelity_sweep(cfg: ExperimentConfig, setup_for: Callable, points: Sequence[dict],
                    constraints_for: Callable, value_name: str = "fidelity_bound"):
    tol_gap, tol_feas = cfg.tolerances
    problems = []
    setups = []
    for p in points:
        setup = setup_for(p)
        setups.append(setup)
        problems.append(rx.assemble(setup.structure, constraints_for(setup, p), setup.functional))
    exported = _export(cfg, problems)

    def work(k):
        t0 = time.perf_counter()
        sol = solve_row(problems[k], tol_gap, tol_feas)
        row = _row(problems[k], sol, points[k], time.perf_counter() - t0, tol_gap, tol_feas)
        logger.info("%s -> %s %.8f (gap %.1e)", points[k], sol.status, sol.primal_value, sol.gap)
        return row

    rows = _map(work, list(range(len(points))), cfg.workers)
    manifest = setups[0].manifest() if setups else None
    return rows, manifest, exported


def run_w3(cfg: ExperimentConfig) -> ResultTable:
    """Swap bound on the W-state fidelity for each noise level (ascending)."""
    eps = sorted(cfg.eps if cfg.eps is not None else DEFAULT_EPS)
    setup = w3_setup(cfg)
    behavior = ideal_behavior("W3", 2)
    rows, manifest, exported = _fidelity_sweep(
        cfg, lambda p: setup, [{"eps": e} for e in eps],
        lambda s, p: rx.behavior_constraints(s.structure, behavior, p["eps"]))
    tol = 2 * cfg.tolerances[0]
    values = [r.value for r in rows if r.optimal]
    report = {"nonincreasing": _nonincreasing(values, tol), "exported": exported}
    return ResultTable("w3", "fidelity_bound", rows, report, manifest, cfg)


def run_wlambda(cfg: ExperimentConfig) -> ResultTable:
    """Swap bound on the ``psi_lambda`` fidelity for each weight (ascending)."""
    lams = sorted(cfg.lambdas if cfg.lambdas is not None else DEFAULT_LAMBDAS)
    setups = {}

    def setup_for(p):
        if p["lambda"] not in setups:
            setups[p["lambda"]] = wlambda_setup(cfg, p["lambda"])
        return setups[p["lambda"]]

    rows, manifest, exported = _fidelity_sweep(
        cfg, setup_for, [{"lambda": v} for v in lams],
        lambda s, p: rx.behavior_constraints(s.structure, ideal_behavior("PsiLambda", 2, lam=p["lambda"])))
    return ResultTable("wlambda", "fidelity_bound", rows, {"exported": exported}, manifest, cfg)


def run_tibell(cfg: ExperimentConfig) -> ResultTable:
    """Fidelity bound of the Bell eigenstate for each Bell value (ascending).

    The default grid has eight points from the local bound to the qubit
    maximum; values above the maximum are left to the solver, which reports
    them as infeasible.
    """
    setup = tibell_setup(cfg)
    ineq = TRANSLATION_INVARIANT_INEQUALITY
    b_local = float(local_bound(ineq))
    b_max = setup.violation.value
    values = cfg.violations
    if values is None:
        values = list(np.linspace(b_local, b_max, DEFAULT_VIOLATION_POINTS))
    values = sorted(float(v) for v in values)
    herm = rx.localizing_hermiticity(setup.structure)
    rows, manifest, exported = _fidelity_sweep(
        cfg, lambda p: setup, [{"bell_value": v} for v in values],
        lambda s, p: [rx.bell_value_constraint(s.structure, ineq, p["bell_value"])] + herm)
    tol = 2 * cfg.tolerances[0]
    opt = [r.value for r in rows if r.optimal]
    report = {"local_bound": b_local, "qubit_maximum": b_max, "angles": list(map(float, setup.violation.angles)),
              "phi": setup.frame.phi, "nondecreasing": all(b >= a - tol for a, b in zip(opt, opt[1:])),
              "exported": exported}
    return ResultTable("tibell", "fidelity_bound", rows, report, manifest, cfg)


def run_w4(cfg: ExperimentConfig) -> ResultTable:
    """Swap bound on the four-party W fidelity per body limit and noise level."""
    eps = sorted(cfg.eps if cfg.eps is not None else [0.0])
    bodies = sorted(set(cfg.bodies), reverse=True)
    setup = w4_setup(cfg)
    behaviors = {b: ideal_behavior("W4", b) for b in bodies}
    points = [{"body_limit": b, "eps": e} for b in bodies for e in eps]
    rows, manifest, exported = _fidelity_sweep(
        cfg, lambda p: setup, points,
        lambda s, p: rx.behavior_constraints(s.structure, behaviors[p["body_limit"]], p["eps"]))
    tol = 2 * cfg.tolerances[0]
    mono = {b: _nonincreasing([r.value for r in rows if r.optimal and r.params["body_limit"] == b], tol)
            for b in bodies}
    return ResultTable("w4", "fidelity_bound", rows, {"nonincreasing": mono, "exported": exported},
                       manifest, cfg)


# --------------------------------------------------------------------------
# diagnostics


COEFFICIENT_NAMES = ("alpha", "beta", "gamma", "lambda0", "lambda1", "lambda2", "omega0", "omega1", "omega2")


def run_dual(cfg: ExperimentConfig) -> ResultTable:
    """Read a Bell-type inequality off the noiseless W-state problem.

    The fidelity problem is solved first. Its feasible set has no interior
    point, so the inequality is taken from the dual of the eigenvalue-margin
    problem, which exposes the face holding the W behavior. The rounded
    inequality is evaluated on the W behavior and on deterministic points.
    """
    tol_gap, tol_feas = cfg.tolerances
    setup = w3_setup(cfg)
    behavior = ideal_behavior("W3", 2)
    prob = rx.assemble(setup.structure, rx.behavior_constraints(setup.structure, behavior, 0.0),
                       setup.functional)
    exported = _export(cfg, [prob])
    t0 = time.perf_counter()
    fid = solve_row(prob, tol_gap, tol_feas)
    cert = exposing_certificate(prob)
    seconds = time.perf_counter() - t0
    ineq = extract_dual_inequality(prob, cert)
    values = behavior.monomial_values()
    all_minus = {canonicalize([(p, m)]): -1.0 for p in range(3) for m in range(3)}
    guess_local = local_bound(ineq.guess)
    alpha = ineq.normalized.as_tuple()[0]
    others = [abs(v) for k, v in zip(COEFFICIENT_NAMES, ineq.normalized.as_tuple())
              if k not in ("alpha", "lambda0")]
    report = {
        "fidelity": {"status": fid.status, "value": fid.primal_value, "gap": fid.gap},
        "exposing_margin": cert.primal_value,
        "inequality": ineq.to_json(),
        "alpha_plus_lambda0_relative": abs(alpha + ineq.normalized.as_tuple()[3]) / abs(alpha),
        "max_other_relative": max(others) / abs(alpha),
        "guess_on_w_behavior": float(ineq.guess.evaluate(values)),
        "guess_on_all_minus_one": float(ineq.guess.evaluate(_deterministic_values(all_minus))),
        "guess_local_bound": float(guess_local),
        "exported": exported,
    }
    status = fid.status if not fid.ok else cert.status
    fid_report = verify_certificate(prob, fid, feas_tol=tol_feas, gap_tol=tol_gap) if fid.dual_blocks else None
    report["fidelity"]["certificate"] = fid_report.to_json() if fid_report else None
    rows = []
    for name, raw, norm, guess in zip(COEFFICIENT_NAMES, ineq.raw.as_tuple(), ineq.normalized.as_tuple(),
                                      ineq.guess.as_tuple()):
        rows.append(ResultRow({"coefficient": name}, float(norm), status, cert.gap, cert.relative_gap,
                              cert.iterations, seconds, fid_report.passed if fid_report else None,
                              fid_report.certified_bound if fid_report else None,
                              {"raw": float(raw), "guess": float(guess)}))
    if rows:
        rows[0].solution = solution_dump(prob, fid) if fid.dual_blocks else None
    return ResultTable("dual", "normalized", rows, report, setup.manifest(), cfg)


def _deterministic_values(singles: dict) -> dict:
    """Moments of a deterministic strategy, given the value of every single letter."""

    class _Values(dict):
        def __missing__(self, mono):
            prod = 1.0
            for letter in mono.word:
                prod *= singles[canonicalize([(letter.party, letter.meas)])]
            return prod

    return _Values()


def run_forced_zzz(cfg: ExperimentConfig) -> ResultTable:
    """Minimum and maximum of the ``Z_A Z_B Z_C`` moment under the W marginals."""
    tol_gap, tol_feas = cfg.tolerances
    eps = sorted(cfg.eps if cfg.eps is not None else [0.0])
    setup = w3_setup(cfg)
    behavior = ideal_behavior("W3", 2)
    zzz = setup.structure.var(canonicalize([(0, 0), (1, 0), (2, 0)]))
    points = [{"eps": e, "sense": s} for e in eps for s in ("min", "max")]
    problems = [rx.assemble(setup.structure, rx.behavior_constraints(setup.structure, behavior, p["eps"]),
                            {zzz: 1.0}, maximize=p["sense"] == "max") for p in points]
    exported = _export(cfg, problems)

    def work(k):
        t0 = time.perf_counter()
        sol = solve_row(problems[k], tol_gap, tol_feas)
        return _row(problems[k], sol, points[k], time.perf_counter() - t0, tol_gap, tol_feas)

    rows = _map(work, list(range(len(points))), cfg.workers)
    return ResultTable("forced-zzz", "zzz", rows, {"exported": exported}, setup.manifest(), cfg)


# --------------------------------------------------------------------------
# slice scan


def local_deterministic_point() -> Behavior:
    """Party-symmetrized deterministic behavior used as the local anchor."""
    signs = [(-1, 1, -1), (1, -1, -1), (1, -1, 1)]   # (Z, X, D) of parties A, B, C
    scenario = Scenario(3, ("Z", "X", "D"))
    entries = {}
    for key in _two_body_keys(3):
        prod = 1.0
        for p, m in enumerate(key):
            if m is not None:
                prod *= signs[p][m]
        entries[key] = prod
    det = Behavior(scenario, entries, 2)
    return Behavior.mixture([(1.0 / 6.0, det.permuted(g)) for g in itertools.permutations(range(3))])


def _two_body_keys(n: int):
    from .oracle import assignments
    return list(assignments(n, 3, 2))


@dataclass
class SliceSpec:
    """Anchors of the slice ``q0 P_local + q1 P_W + (1 - q0 - q1) P_noise``."""

    p_local: Behavior
    p_w: Behavior
    p_noise: Behavior

    @classmethod
    def default(cls) -> "SliceSpec":
        p_w = ideal_behavior("W3", 2)
        noise = {k: (1.0 if all(m is None for m in k) else 0.0) for k in p_w.entries}
        return cls(local_deterministic_point(), p_w, Behavior(p_w.scenario, noise, 2))

    def point(self, q0: float, q1: float) -> Behavior:
        entries = {}
        for k in self.p_w.entries:
            v = q0 * self.p_local[k] + q1 * self.p_w[k] + (1.0 - q0 - q1) * self.p_noise[k]
            entries[k] = min(1.0, max(-1.0, v)) if abs(v) <= 1.0 + 1e-12 else v
        return Behavior(self.p_w.scenario, entries, 2)

    def direction_reach(self, d0: float, d1: float) -> float:
        """Largest ``t`` keeping every correlator of ``P_noise + t d`` inside ``[-1, 1]``."""
        peak = max(abs(d0 * self.p_local[k] + d1 * self.p_w[k]) for k in self.p_w.entries
                   if any(m is not None for m in k))
        return math.inf if peak == 0.0 else 1.0 / peak


class SliceScanner:
    """NPA and local feasibility of behaviors in the slice."""

    def __init__(self, cfg: ExperimentConfig, spec: SliceSpec | None = None):
        self.cfg = cfg
        self.spec = spec or SliceSpec.default()
        self.setup = w3_setup(cfg)
        self.keys = [k for k in self.spec.p_w.entries if any(m is not None for m in k)]
        self.strategies = np.array(list(itertools.product((1.0, -1.0), repeat=9)))   # 512 x 9

    def npa_margin(self, behavior: Behavior) -> tuple[float, SdpSolution]:
        """Largest smallest-eigenvalue margin of the moment matrix under ``behavior``."""
        margin, sol, _ = self._margin_solve(behavior)
        return margin, sol

    def _margin_solve(self, behavior: Behavior):
        prob = rx.assemble(self.setup.structure, rx.behavior_constraints(self.setup.structure, behavior), None)
        tol_gap, tol_feas = self.cfg.tolerances
        mprob = margin_problem(prob)
        sol = _solve_direct(mprob, SolverOptions(gap_tol=tol_gap, feas_tol=tol_feas))
        return float(sol.x[-1]), sol, mprob

    def _certified(self, problem: SdpProblem, sol: SdpSolution) -> bool:
        tol_gap, tol_feas = self.cfg.tolerances
        report = verify_certificate(problem, sol, feas_tol=tol_feas, gap_tol=tol_gap)
        if not report.passed:
            logger.warning("slice certificate check failed: %s", "; ".join(report.failures))
        return report.passed

    def _correlators(self) -> np.ndarray:
        out = np.ones((len(self.keys), len(self.strategies)))
        for r, key in enumerate(self.keys):
            for p, m in enumerate(key):
                if m is not None:
                    out[r] *= self.strategies[:, 3 * p + m]
        return out

    def local_problem(self, d0: float, d1: float) -> SdpProblem:
        """``max t`` with ``t d`` a mixture of the 512 deterministic strategies.

        Weights and ``t`` form one diagonal block (all nonnegative); the
        equalities match every one- and two-body correlator.
        """
        corr = self._correlators()
        n = corr.shape[1]
        m = n + 1
        target = np.array([d0 * self.spec.p_local[k] + d1 * self.spec.p_w[k] for k in self.keys])
        eq = sp.vstack([sp.hstack([sp.csr_matrix(corr), sp.csr_matrix(-target.reshape(-1, 1))]),
                        sp.csr_matrix(np.r_[np.ones(n), 0.0].reshape(1, -1))]).tocsr()
        rhs = np.r_[np.zeros(len(self.keys)), 1.0]
        idx = np.arange(m) * (m + 1)
        coef = sp.csc_matrix((np.ones(m), (idx, np.arange(m))), shape=(m * m, m))
        c = np.zeros(m)
        c[n] = -1.0
        labels = [f"corr|{k}" for k in self.keys] + ["normalization"]
        return SdpProblem(m, [Block(m, np.zeros((m, m)), coef)], c, 0.0, eq, rhs, labels, maximize=False)

    def local_reach(self, d0: float, d1: float) -> tuple[float, SdpSolution]:
        tol_gap, tol_feas = self.cfg.tolerances
        prob = self.local_problem(d0, d1)
        sol = solve(prob, gap_tol=tol_gap, feas_tol=tol_feas)
        return -sol.primal_value, sol

    def local_feasible(self, q0: float, q1: float) -> bool:
        norm = math.hypot(q0, q1)
        if norm == 0.0:
            return True
        reach, sol = self.local_reach(q0 / norm, q1 / norm)
        return sol.ok and norm <= reach * (1.0 + LOCAL_TOL)

    def npa_feasible(self, q0: float, q1: float) -> bool:
        margin, _ = self.npa_margin(self.spec.point(q0, q1))
        return margin >= -MARGIN_TOL

    def boundary(self, angle: float) -> ResultRow | None:
        """Bisect the NPA boundary along direction ``angle`` from ``P_noise``."""
        d0, d1 = math.cos(angle), math.sin(angle)
        d0, d1 = (0.0 if abs(d0) < 1e-15 else d0), (0.0 if abs(d1) < 1e-15 else d1)
        t0 = time.perf_counter()
        hi = self.spec.direction_reach(d0, d1)
        worst, gap, iters, certified = SdpSolution.OPTIMAL, 0.0, 0, True

        def feasible(t):
            nonlocal worst, gap, iters, certified
            margin, sol, mprob = self._margin_solve(self.spec.point(t * d0, t * d1))
            if not sol.ok:
                worst = sol.status
            certified = certified and self._certified(mprob, sol)
            gap = max(gap, sol.gap)
            iters += sol.iterations
            return margin >= -MARGIN_TOL

        if feasible(hi):
            logger.info("direction %.4f rad: the NPA boundary lies outside the correlator box; skipped", angle)
            return None
        lo = 0.0
        while hi - lo > self.cfg.bisection_tol:
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid
        t_star = 0.5 * (lo + hi)
        reach, lsol = self.local_reach(d0, d1)
        if not lsol.ok:
            worst = lsol.status
        certified = certified and self._certified(self.local_problem(d0, d1), lsol)
        extra = {"t_low": lo, "t_high": hi, "q0": t_star * d0, "q1": t_star * d1,
                 "local_t": reach, "local_q0": reach * d0, "local_q1": reach * d1,
                 "local_status": lsol.status, "boundary_point_local": bool(lo <= reach * (1 + LOCAL_TOL))}
        return ResultRow({"angle": angle, "d0": d0, "d1": d1}, t_star, worst, max(gap, lsol.gap),
                         max(gap, lsol.gap), iters + lsol.iterations, time.perf_counter() - t0, certified, None,
                         extra)


def run_slice(cfg: ExperimentConfig) -> ResultTable:
    """Quantum and local boundaries along a fan of rays from ``P_noise``.

    Directions are ``2 pi k / directions`` in the ``(q0, q1)`` plane, so
    ``k = 0`` points at ``P_local`` and, when ``directions`` is a multiple of
    four, ``k = directions / 4`` points at ``P_W``. A ray is scanned up to the
    edge of the correlator box ``[-1, 1]``; rays whose boundary lies beyond
    it are skipped.
    """
    scanner = SliceScanner(cfg)
    n = int(cfg.directions)
    angles = [2.0 * math.pi * k / n for k in range(n)]
    found = _map(scanner.boundary, angles, cfg.workers)
    rows = [r for r in found if r is not None]
    skipped = [a for a, r in zip(angles, found) if r is None]
    anchors = {
        "P_noise": {"npa_feasible": scanner.npa_feasible(0.0, 0.0), "local_feasible": scanner.local_feasible(0.0, 0.0)},
        "P_local": {"npa_feasible": scanner.npa_feasible(1.0, 0.0), "local_feasible": scanner.local_feasible(1.0, 0.0)},
        "P_W": {"npa_feasible": scanner.npa_feasible(0.0, 1.0), "local_feasible": scanner.local_feasible(0.0, 1.0)},
    }
    report = {"anchors": anchors, "skipped_directions": skipped, "margin_tolerance": MARGIN_TOL,
              "conventions": "rays from P_noise at angles 2 pi k / n in the (q0, q1) plane; "
                             "t is the distance along the ray; scanned up to the correlator box"}
    return ResultTable("slice", "t_star", rows, report, scanner.setup.manifest(), cfg)


def slice_ray(cfg: ExperimentConfig, angle: float) -> ResultRow | None:
    """Boundary along one direction, for spot checks."""
    return SliceScanner(cfg).boundary(angle)


# --------------------------------------------------------------------------
# dispatch


RUNNERS = {"w3": run_w3, "wlambda": run_wlambda, "tibell": run_tibell, "w4": run_w4, "dual": run_dual,
           "forced-zzz": run_forced_zzz, "slice": run_slice}


def run(cfg: ExperimentConfig) -> ResultTable:
    """Run the configured experiment and write its outputs when ``cfg.out`` is set."""
    table = RUNNERS[cfg.experiment](cfg)
    if cfg.out:
        table.write(cfg.out)
    return table


def build_problems(cfg: ExperimentConfig) -> list[tuple[dict, SdpProblem]]:
    """The SDPs an experiment would solve, without solving them (slice excluded)."""
    if cfg.experiment == "w3" or cfg.experiment == "dual":
        setup = w3_setup(cfg)
        beh = ideal_behavior("W3", 2)
        eps = [0.0] if cfg.experiment == "dual" else sorted(cfg.eps or DEFAULT_EPS)
        return [({"eps": e}, rx.assemble(setup.structure, rx.behavior_constraints(setup.structure, beh, e),
                                         setup.functional)) for e in eps]
    if cfg.experiment == "wlambda":
        out = []
        for lam in sorted(cfg.lambdas or DEFAULT_LAMBDAS):
            setup = wlambda_setup(cfg, lam)
            beh = ideal_behavior("PsiLambda", 2, lam=lam)
            out.append(({"lambda": lam}, rx.assemble(setup.structure, rx.behavior_constraints(setup.structure, beh),
                                                     setup.functional)))
        return out
    if cfg.experiment == "tibell":
        setup = tibell_setup(cfg)
        ineq = TRANSLATION_INVARIANT_INEQUALITY
        values = cfg.violations or list(np.linspace(float(local_bound(ineq)), setup.violation.value,
                                                    DEFAULT_VIOLATION_POINTS))
        herm = rx.localizing_hermiticity(setup.structure)
        return [({"bell_value": v}, rx.assemble(setup.structure,
                                                [rx.bell_value_constraint(setup.structure, ineq, v)] + herm,
                                                setup.functional)) for v in sorted(values)]
    if cfg.experiment == "w4":
        setup = w4_setup(cfg)
        return [({"body_limit": b, "eps": e},
                 rx.assemble(setup.structure, rx.behavior_constraints(setup.structure, ideal_behavior("W4", b), e),
                             setup.functional))
                for b in sorted(set(cfg.bodies), reverse=True) for e in sorted(cfg.eps or [0.0])]
    if cfg.experiment == "forced-zzz":
        setup = w3_setup(cfg)
        beh = ideal_behavior("W3", 2)
        zzz = setup.structure.var(canonicalize([(0, 0), (1, 0), (2, 0)]))
        return [({"eps": e, "sense": s}, rx.assemble(setup.structure, rx.behavior_constraints(setup.structure, beh, e),
                                                     {zzz: 1.0}, maximize=s == "max"))
                for e in sorted(cfg.eps or [0.0]) for s in ("min", "max")]
    if cfg.experiment == "slice":
        scanner = SliceScanner(cfg)
        prob = rx.assemble(scanner.setup.structure,
                           rx.behavior_constraints(scanner.setup.structure, scanner.spec.p_w), None)
        return [({"q0": 0.0, "q1": 1.0}, margin_problem(prob))]
    raise ConfigError(f"unknown experiment {cfg.experiment!r}")
