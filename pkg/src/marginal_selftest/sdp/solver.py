"""Primal-dual interior-point solver for affine-PSD-block problems.

Equalities are eliminated first (``x = x0 + T y`` over an independent set of
rows), leaving a pure linear matrix inequality in ``y``::

    minimize c'^T y   s.t.  Z = C' + A'(y) >= 0

with dual ``maximize -<C', X>  s.t.  A'^*(X) = c', X >= 0``. The iteration is
an infeasible-start Mehrotra predictor-corrector with Nesterov-Todd scaling.
Blocks whose data is diagonal are handled as nonnegative orthants.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .problem import SdpProblem, SdpSolution

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
STEP_FRACTION = 0.98
REGULARIZATION = 1e-12
REFINEMENT_STEPS = 3


@dataclass
class SolverOptions:
    gap_tol: float = 1e-7
    feas_tol: float = 1e-8
    max_iters: int = 100
    predictor_corrector: bool = True
    verbose: bool = False
    target_mu: float | None = None   # fixed centering target instead of optimization


# --------------------------------------------------------------------------
# equality elimination


@dataclass
class _Elimination:
    x0: np.ndarray
    T: sp.csc_matrix          # full variables from reduced ones
    rows: np.ndarray          # independent equality rows kept
    basic: np.ndarray         # variables solved for by the equalities
    dropped: np.ndarray       # dependent rows


def _eliminate(problem: SdpProblem) -> _Elimination:
    m = problem.num_vars
    E = problem.eq_matrix.toarray()
    b = problem.eq_rhs
    if E.shape[0] == 0:
        return _Elimination(np.zeros(m), sp.identity(m, format="csc"), np.zeros(0, int),
                            np.zeros(0, int), np.zeros(0, int))
    _, R, piv = sla.qr(E.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * max(diag[0], 1.0))) if diag.size else 0
    rows = np.sort(piv[:rank])
    dropped = np.setdiff1d(np.arange(E.shape[0]), rows)
    if dropped.size:
        logger.info("dropping %d linearly dependent equality rows", dropped.size)
    Ei = E[rows]
    _, _, cpiv = sla.qr(Ei, mode="economic", pivoting=True)
    basic = np.sort(cpiv[:rank])
    nonbasic = np.setdiff1d(np.arange(m), basic)
    lu = sla.lu_factor(Ei[:, basic])
    x0 = np.zeros(m)
    x0[basic] = sla.lu_solve(lu, b[rows])
    if dropped.size:
        resid = E[dropped] @ x0 - b[dropped]
        if np.max(np.abs(resid)) > 1e-8 * (1 + np.max(np.abs(b))):
            raise ValueError("equality constraints are inconsistent")
    S = -sla.lu_solve(lu, Ei[:, nonbasic]) if nonbasic.size else np.zeros((rank, 0))
    S[np.abs(S) < 1e-15] = 0.0
    T = sp.lil_matrix((m, nonbasic.size))
    T[basic, :] = S
    T[nonbasic, np.arange(nonbasic.size)] = 1.0
    return _Elimination(x0, sp.csc_matrix(T), rows, basic, dropped)


# --------------------------------------------------------------------------
# cone blocks


class _Dense:
    diagonal = False

    def __init__(self, n, C, A):
        self.n = n
        self.C = C
        self.A = sp.csc_matrix(A)
        self.AT = self.A.T.tocsr()

    def op(self, y):
        return self.C + self.lin(y)

    def lin(self, y):
        return (self.A @ y).reshape(self.n, self.n)

    def adj(self, X):
        return self.AT @ X.reshape(-1)

    def identity(self, s):
        return s * np.eye(self.n)

    def inner(self, X, Z):
        return float(np.vdot(X, Z))

    def norm(self, X):
        return float(np.linalg.norm(X))

    def scaling(self, X, Z):
        # SVD of Lz^T Lx gives the scaled point v = sqrt(eig(XZ)) with small
        # relative error even when X Z is close to singular
        Lx = np.linalg.cholesky(X)
        Lz = np.linalg.cholesky(Z)
        _, v, Vt = np.linalg.svd(Lz.T @ Lx)
        v = np.maximum(v, 1e-300)
        G = (Lx @ Vt.T) * v ** -0.5
        Ginv = (Vt * v[:, None] ** 0.5) @ sla.solve_triangular(Lx, np.eye(self.n), lower=True)
        return {"G": G, "Ginv": Ginv, "W": G @ G.T, "v": v}

    def schur(self, sc, M):
        W = sc["W"]
        n = self.n
        A = self.A
        cols = np.flatnonzero(np.diff(A.indptr))
        chunk = max(1, int(4e6 // (n * n)))
        for start in range(0, cols.size, chunk):
            js = cols[start:start + chunk]
            buf = np.empty((n * n, js.size))
            for t, j in enumerate(js):
                sl = slice(A.indptr[j], A.indptr[j + 1])
                if sl.stop - sl.start > n:
                    Aj = np.zeros(n * n)
                    Aj[A.indices[sl]] = A.data[sl]
                    buf[:, t] = (W @ Aj.reshape(n, n) @ W).reshape(-1)
                    continue
                r, s = np.divmod(A.indices[sl], n)
                buf[:, t] = ((W[:, r] * A.data[sl]) @ W[s, :]).reshape(-1)
            M[:, js] += self.AT @ buf

    def to_scaled(self, sc, dX, dZ):
        return sc["Ginv"] @ dX @ sc["Ginv"].T, sc["G"].T @ dZ @ sc["G"]

    def rhs(self, sc, sigma_mu, corr=None):
        v = sc["v"]
        R = -2.0 * np.diag(v ** 2) + 2.0 * sigma_mu * np.eye(self.n)
        if corr is not None:
            dXs, dZs = corr
            P = dXs @ dZs
            R -= P + P.T
        R /= v[:, None] + v[None, :]
        return R

    def newton_dx(self, sc, Rs, D):
        """``G Rs G^T - W D W``, formed in the scaled space to avoid cancellation."""
        G = sc["G"]
        return G @ (Rs - G.T @ D @ G) @ G.T

    def sym(self, X):
        return 0.5 * (X + X.T)

    def max_step(self, X, dX):
        try:
            L = np.linalg.cholesky(X)
        except np.linalg.LinAlgError:
            return 0.0
        Li = sla.solve_triangular(L, np.eye(self.n), lower=True)
        S = Li @ dX @ Li.T
        if not np.all(np.isfinite(S)):
            return 0.0
        try:
            lo = np.linalg.eigvalsh(0.5 * (S + S.T))[0]
        except np.linalg.LinAlgError:
            return 0.0
        return np.inf if lo >= 0 else -1.0 / lo

    def min_eig(self, X):
        return float(np.linalg.eigvalsh(self.sym(X))[0])


class _Diagonal:
    diagonal = True

    def __init__(self, n, C, A):
        idx = np.arange(n) * (n + 1)
        self.n = n
        self.C = np.diag(C).copy()
        self.A = sp.csc_matrix(A)[idx, :]
        self.AT = self.A.T.tocsr()

    def op(self, y):
        return self.C + self.lin(y)

    def lin(self, y):
        return self.A @ y

    def adj(self, X):
        return self.AT @ X

    def identity(self, s):
        return s * np.ones(self.n)

    def inner(self, X, Z):
        return float(X @ Z)

    def norm(self, X):
        return float(np.linalg.norm(X))

    def scaling(self, X, Z):
        return {"w": X / Z, "v": np.sqrt(X * Z), "g": np.sqrt(X / Z)}

    def schur(self, sc, M):
        M += (self.AT @ self.A.multiply(sc["w"][:, None])).toarray()

    def to_scaled(self, sc, dX, dZ):
        return dX / sc["g"], dZ * sc["g"]

    def rhs(self, sc, sigma_mu, corr=None):
        v = sc["v"]
        R = -2.0 * v ** 2 + 2.0 * sigma_mu
        if corr is not None:
            R -= 2.0 * corr[0] * corr[1]
        return R / (2.0 * v)

    def newton_dx(self, sc, Rs, D):
        return sc["g"] * (Rs - sc["g"] * D)

    def sym(self, X):
        return X

    def max_step(self, X, dX):
        neg = dX < 0
        if not neg.any():
            return np.inf
        return float(np.min(-X[neg] / dX[neg]))

    def min_eig(self, X):
        return float(np.min(X)) if X.size else 0.0


def _is_diagonal(blk) -> bool:
    n = blk.size
    if n == 1:
        return True
    if np.count_nonzero(blk.const - np.diag(np.diag(blk.const))):
        return False
    r, s = np.divmod(blk.coef.tocoo().row, n)
    return bool(np.all(r == s))


# --------------------------------------------------------------------------
# interior-point iteration


def _schur_system(cones, scal, r):
    """Schur complement ``M`` of the Newton system, as a product and a solver.

    The factorization carries a tiny diagonal shift; iterative refinement
    against the unshifted product removes its effect.
    """
    M = np.zeros((r, r))
    for k, sc in zip(cones, scal):
        k.schur(sc, M)
    M = 0.5 * (M + M.T)
    reg = REGULARIZATION * max(1.0, float(np.max(np.abs(np.diag(M))))) if r else 0.0
    try:
        factor = sla.cho_factor(M + reg * np.eye(r), check_finite=False)
        return (lambda v: M @ v), (lambda h: sla.cho_solve(factor, h, check_finite=False))
    except np.linalg.LinAlgError:
        lu = sla.lu_factor(M + reg * np.eye(r), check_finite=False)
        return (lambda v: M @ v), (lambda h: sla.lu_solve(lu, h, check_finite=False))


def _ipm(cones, c, opts: SolverOptions, offset: float = 0.0):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _ipm_loop(cones, c, opts, offset)


def _ipm_loop(cones, c, opts: SolverOptions, offset: float = 0.0):
    r = c.size
    normA = np.sqrt(sum(np.asarray(k.A.multiply(k.A).sum(axis=0)).ravel() for k in cones)) if cones else np.zeros(r)
    normC = max(k.norm(k.C) for k in cones)
    nmax = max(k.n for k in cones)
    ratio = np.max((1.0 + np.abs(c)) / (1.0 + normA)) if r else 1.0
    xi = max(10.0, np.sqrt(nmax), nmax * ratio)
    eta = max(10.0, np.sqrt(nmax), float(np.max(normA)) if r else 0.0, normC)
    X = [k.identity(xi) for k in cones]
    Z = [k.identity(eta) for k in cones]
    y = np.zeros(r)
    N = sum(k.n for k in cones)
    normc = float(np.linalg.norm(c))
    history = []
    status = SdpSolution.MAX_ITERATIONS
    best = None

    for it in range(opts.max_iters + 1):
        Rp = [k.op(y) - Zk for k, Zk in zip(cones, Z)]
        rd = c - sum(k.adj(Xk) for k, Xk in zip(cones, X))
        pobj = float(c @ y)
        dobj = -sum(k.inner(k.C, Xk) for k, Xk in zip(cones, X))
        mu = sum(k.inner(Xk, Zk) for k, Xk, Zk in zip(cones, X, Z)) / N
        pinf = np.sqrt(sum(k.norm(R) ** 2 for k, R in zip(cones, Rp))) / (1.0 + normC)
        dinf = float(np.linalg.norm(rd)) / (1.0 + normc)
        # measured on the reported objective, constant included
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj + offset) + abs(dobj + offset))
        history.append({"iter": it, "primal": pobj, "dual": dobj, "mu": mu,
                        "pinf": pinf, "dinf": dinf, "relgap": relgap, "y_norm": float(np.linalg.norm(y))})
        if opts.verbose:
            logger.info("it %3d  p %.10g  d %.10g  gap %.2e  pinf %.2e  dinf %.2e  mu %.2e",
                        it, pobj, dobj, relgap, pinf, dinf, mu)
        merit = max(pinf, dinf) / opts.feas_tol
        if opts.target_mu is None:
            merit = max(merit, relgap / opts.gap_tol)
        if best is None or merit < best[0]:
            best = (merit, y.copy(), [Xk.copy() for Xk in X], [Zk.copy() for Zk in Z], it)
        if opts.target_mu is not None:
            if pinf <= opts.feas_tol and dinf <= opts.feas_tol:
                status = SdpSolution.OPTIMAL
                break
        elif relgap <= opts.gap_tol and pinf <= opts.feas_tol and dinf <= opts.feas_tol:
            status = SdpSolution.OPTIMAL
            break
        # an unbounded dual iterate with a vanishing gap direction means the LMI is empty
        xnorm = max(k.norm(Xk) for k, Xk in zip(cones, X))
        if xnorm > 1e10 * (1.0 + xi) and dobj > 1e8 * (1.0 + abs(pobj)):
            status = SdpSolution.INFEASIBLE
            break
        if float(np.linalg.norm(y)) > 1e12 and pobj < -1e10:
            status = SdpSolution.INFEASIBLE
            break
        if it == opts.max_iters:
            break

        try:
            scal = [k.scaling(Xk, Zk) for k, Xk, Zk in zip(cones, X, Z)]
        except np.linalg.LinAlgError:
            status = SdpSolution.NUMERICAL
            break
        try:
            M, base_solve = _schur_system(cones, scal, r)
        except (np.linalg.LinAlgError, ValueError):
            status = SdpSolution.NUMERICAL
            break

        def solve(h, M=M, base_solve=base_solve):
            # iterative refinement against the unregularized Schur matrix
            dy = base_solve(h)
            for _ in range(REFINEMENT_STEPS):
                res = h - M(dy)
                if np.linalg.norm(res) <= 1e-14 * (1.0 + np.linalg.norm(h)):
                    break
                dy = dy + base_solve(res)
            return dy

        def direction(Rc):
            h = -rd.copy()
            for k, sc, Rck, Rpk in zip(cones, scal, Rc, Rp):
                h += k.adj(k.newton_dx(sc, Rck, Rpk))
            dy = solve(h)
            for attempt in range(REFINEMENT_STEPS + 1):
                dZ = [Rpk + k.lin(dy) for k, Rpk in zip(cones, Rp)]
                dX = [k.sym(k.newton_dx(sc, Rck, dZk)) for k, sc, Rck, dZk in zip(cones, scal, Rc, dZ)]
                # refine against the residual of the full Newton system; dZ and
                # dX must come from the final dy
                err = sum(k.adj(d) for k, d in zip(cones, dX)) - rd
                if attempt == REFINEMENT_STEPS or np.linalg.norm(err) <= 1e-13 * (1.0 + np.linalg.norm(rd)):
                    break
                dy = dy + solve(err)
            history[-1]["newton"] = float(np.linalg.norm(err)) / (1.0 + float(np.linalg.norm(rd)))
            return dX, dy, dZ

        def steps(dX, dZ):
            ap = min([k.max_step(Xk, d) for k, Xk, d in zip(cones, X, dX)] + [np.inf])
            ad = min([k.max_step(Zk, d) for k, Zk, d in zip(cones, Z, dZ)] + [np.inf])
            return ap, ad

        if opts.target_mu is not None:
            Rc = [k.rhs(sc, opts.target_mu) for k, sc in zip(cones, scal)]
        elif opts.predictor_corrector:
            Rc = [k.rhs(sc, 0.0) for k, sc in zip(cones, scal)]
            dX, dy, dZ = direction(Rc)
            ap, ad = steps(dX, dZ)
            ap, ad = min(1.0, ap), min(1.0, ad)
            mu_aff = sum(k.inner(Xk + ap * dx, Zk + ad * dz)
                         for k, Xk, Zk, dx, dz in zip(cones, X, Z, dX, dZ)) / N
            sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
            corr = [k.to_scaled(sc, dx, dz) for k, sc, dx, dz in zip(cones, scal, dX, dZ)]
            Rc = [k.rhs(sc, sigma * mu, cr) for k, sc, cr in zip(cones, scal, corr)]
        else:
            Rc = [k.rhs(sc, 0.1 * mu) for k, sc in zip(cones, scal)]
        dX, dy, dZ = direction(Rc)
        if not (np.all(np.isfinite(dy)) and all(np.all(np.isfinite(d)) for d in dX)):
            status = SdpSolution.NUMERICAL
            break
        ap, ad = steps(dX, dZ)
        ap = min(1.0, STEP_FRACTION * ap)
        ad = min(1.0, STEP_FRACTION * ad)
        history[-1]["steps"] = (ap, ad)
        history[-1]["step_norm"] = float(np.linalg.norm(dy))
        if ap < 1e-12 and ad < 1e-12:
            status = SdpSolution.NUMERICAL
            break
        X = [k.sym(Xk + ap * d) for k, Xk, d in zip(cones, X, dX)]
        y = y + ad * dy
        Z = [k.sym(Zk + ad * d) for k, Zk, d in zip(cones, Z, dZ)]

    if status != SdpSolution.OPTIMAL and best is not None and status != SdpSolution.INFEASIBLE:
        _, y, X, Z, _ = best
    return y, X, status, len(history) - 1, history


# --------------------------------------------------------------------------
# public entry point


def solve(problem: SdpProblem, gap_tol: float = 1e-7, feas_tol: float = 1e-8, max_iters: int = 100,
          predictor_corrector: bool = True, verbose: bool = False,
          facial_reduction: bool = False, exposed: bool | None = None) -> SdpSolution:
    """Solve ``problem`` and recover the dual certificate.

    With ``facial_reduction`` the blocks are first shrunk to the face that
    contains the feasible set (see :mod:`.facial`); the solution is reported
    for the original problem, with the equalities added by the reduction and
    their multipliers attached. ``exposed`` controls the numerical rounds
    of the reduction (``None`` runs them only after an exact round).

    Deterministic for fixed settings. Non-optimal exits return the best
    iterate seen, with its honest gap and residuals.
    """
    opts = SolverOptions(gap_tol, feas_tol, max_iters, predictor_corrector, verbose)
    if not facial_reduction:
        return _solve_direct(problem, opts)
    from .facial import reduce_faces

    red = reduce_faces(problem, exposed=exposed)
    inner = _solve_direct(red.problem, opts)
    k = len(problem.eq_rhs)
    dual_blocks = red.embed(inner.dual_blocks)
    sol = SdpSolution(inner.status, inner.x, problem.objective(inner.x), inner.dual_value, dual_blocks,
                      inner.multipliers[:k], inner.iterations, _primal_residual(problem, inner.x),
                      inner.dual_infeasibility, inner.history, inner.multipliers[k:], red)
    return sol


def _solve_direct(problem: SdpProblem, opts: SolverOptions) -> SdpSolution:
    elim = _eliminate(problem)
    T = elim.T
    cred = T.T @ problem.c
    offset = float(problem.c @ elim.x0 + problem.offset)

    cones = []
    for blk in problem.blocks:
        A = sp.csc_matrix(blk.coef @ T)
        A.eliminate_zeros()
        C = blk.const + (blk.coef @ elim.x0).reshape(blk.size, blk.size)
        C = 0.5 * (C + C.T)
        cone = _Diagonal(blk.size, C, A) if _is_diagonal(blk) else _Dense(blk.size, C, A)
        cones.append(cone)

    # reduced variables that no block touches are free: bounded only if costless
    used = np.zeros(T.shape[1], dtype=bool)
    for k in cones:
        used[np.diff(k.A.indptr) > 0] = True
    if np.any(np.abs(cred[~used]) > 1e-12):
        logger.warning("objective is unbounded along a direction untouched by any block")
        return _unbounded(problem, elim)
    keep = np.flatnonzero(used)
    for k in cones:
        k.A = k.A[:, keep]
        k.AT = k.A.T.tocsr()

    if not cones:
        y = np.zeros(0)
        X, status, iters, history = [], SdpSolution.OPTIMAL, 0, []
    else:
        y, X, status, iters, history = _ipm(cones, cred[keep], opts, offset)

    yfull = np.zeros(T.shape[1])
    yfull[keep] = y
    x = elim.x0 + T @ yfull
    dual_blocks = [np.diag(Xk) if k.diagonal else Xk for k, Xk in zip(cones, X)]
    multipliers = _multipliers(problem, elim, dual_blocks)
    value = problem.objective(x)
    dual = _dual_value(problem, dual_blocks, multipliers)
    pinf = _primal_residual(problem, x)
    dinf = float(np.linalg.norm(_stationarity(problem, dual_blocks, multipliers)))
    sol = SdpSolution(status, x, value, dual, dual_blocks, multipliers, iters, pinf, dinf, history)
    logger.info("solve: status %s value %.10g dual %.10g gap %.2e in %d iterations",
                status, value, dual, sol.gap, iters)
    return sol


def _unbounded(problem, elim):
    m = problem.num_vars
    return SdpSolution(SdpSolution.INFEASIBLE, elim.x0.copy(), problem.objective(elim.x0), np.nan,
                       [np.zeros((b.size, b.size)) for b in problem.blocks],
                       np.zeros(len(problem.eq_rhs)), 0)


def _stationarity(problem: SdpProblem, dual_blocks, multipliers) -> np.ndarray:
    """``c - sum_k A_k^*(Y_k) - E^T mu`` in the internal (minimization) sense."""
    res = problem.c.copy()
    for blk, Y in zip(problem.blocks, dual_blocks):
        res -= blk.adjoint(Y)
    if multipliers.size:
        res -= problem.eq_matrix.T @ multipliers
    return res


def _multipliers(problem: SdpProblem, elim: _Elimination, dual_blocks) -> np.ndarray:
    mu = np.zeros(len(problem.eq_rhs))
    if elim.rows.size == 0:
        return mu
    g = problem.c.copy()
    for blk, Y in zip(problem.blocks, dual_blocks):
        g -= blk.adjoint(Y)
    Et = problem.eq_matrix[elim.rows].T.toarray()
    sol, *_ = np.linalg.lstsq(Et, g, rcond=None)
    mu[elim.rows] = sol
    return mu


def _dual_value(problem: SdpProblem, dual_blocks, multipliers) -> float:
    val = -sum(float(np.vdot(blk.const, Y)) for blk, Y in zip(problem.blocks, dual_blocks))
    val += float(problem.eq_rhs @ multipliers) + problem.offset
    return -val if problem.maximize else val


def _primal_residual(problem: SdpProblem, x) -> float:
    worst = 0.0
    if len(problem.eq_rhs):
        worst = float(np.max(np.abs(problem.eq_matrix @ x - problem.eq_rhs)))
    for blk in problem.blocks:
        worst = max(worst, max(0.0, -float(np.linalg.eigvalsh(blk.evaluate(x))[0])))
    return worst
