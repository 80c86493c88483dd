"""Facial reduction for problems whose blocks cannot be strictly positive.

Moment matrices built from exact marginal data are typically singular at
every feasible point: a polynomial ``p`` with ``<p^dagger p>`` fixed to zero
by the constraints makes its coefficient vector a kernel vector of the block.
Interior-point methods then lose accuracy because the dual optimum recedes
to infinity.

Two kinds of rounds shrink the blocks.

Clique rounds are exact. They mark the block entries that are constant on the
affine hull of the equalities. On any clique of such entries the principal
submatrix is a constant matrix; it must be PSD, and each of its null vectors
``v`` satisfies ``v^T F(x) v = 0`` on the whole hull, hence ``F(x) v = 0`` on
the feasible set. For a kernel basis ``K``, positivity of ``F(x)`` is then
equivalent to ``F(x) K = 0`` together with positivity of the principal
submatrix that omits a set of pivot rows of ``K``. New equalities can fix
more entries, which is why several rounds may be needed.

Exposed rounds handle kernels that only follow from positivity of entries
that still vary on the hull. They maximize the smallest eigenvalue margin
``s`` subject to ``F(x) - s I >= 0``. A margin of zero means no strictly
feasible point exists, and the eigenvectors of ``F`` with vanishing
eigenvalue at the maximizer span the common kernel of the feasible set. The
kernel is accepted only behind a wide spectral gap, and the equalities
``F(x) K = 0`` are truncated to their numerical row space so that the
reduced system stays consistent. These rounds are accurate to the precision
of the auxiliary solve rather than exact, and each one records its margin.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .problem import Block, SdpProblem

logger = logging.getLogger(__name__)

DETERMINED_TOL = 1e-12
NULL_TOL = 1e-10
VERIFY_TOL = 1e-9
MAX_CLIQUES = 200000
SLATER_TOL = 1e-6      # margin (relative to the block scale) below which an exposed round runs
KERNEL_TOL = 1e-6      # eigenvalues below this fraction of the block scale are kernel
GAP_TOL = 1e-3         # the first retained eigenvalue must exceed this fraction of the scale
ROWSPACE_TOL = 1e-7    # relative singular value cut for exposed-round equalities
ROWSPACE_GAP = 1e-3    # a drop by this factor between singular values also ends the row space


@dataclass
class FaceStep:
    """One accepted kernel of one block, in the block's coordinates at that round."""

    block: int
    method: str          # "clique" (exact) or "exposed" (numerical)
    dimension: int
    num_rows: int
    margin: float | None = None


@dataclass
class FacialReduction:
    problem: SdpProblem                 # reduced problem, same variables as the original
    bases: list[np.ndarray]             # per block, original coordinates of the reduced block
    steps: list[FaceStep] = field(default_factory=list)
    extra_rows: sp.csr_matrix | None = None
    extra_rhs: np.ndarray | None = None

    @property
    def num_extra(self) -> int:
        return 0 if self.extra_rhs is None else len(self.extra_rhs)

    @property
    def exact(self) -> bool:
        """True when every accepted kernel came from an exact clique round."""
        return all(step.method == "clique" for step in self.steps)

    def embed(self, blocks: list[np.ndarray]) -> list[np.ndarray]:
        """Map reduced dual blocks ``Y`` back to ``B Y B^T`` in the original coordinates."""
        return [B @ Y @ B.T for Y, B in zip(blocks, self.bases)]

    def summary(self) -> dict:
        return {
            "exact": self.exact,
            "block_sizes": [B.shape[1] for B in self.bases],
            "extra_equalities": self.num_extra,
            "steps": [vars(step) for step in self.steps],
        }


def compress_block(blk: Block, B: np.ndarray) -> Block:
    """The block ``B^T F(x) B``."""
    n, d = B.shape
    const = B.T @ blk.const @ B
    if np.count_nonzero(B) == d and np.all(np.count_nonzero(B, axis=0) == 1):
        # coordinate selection: a principal submatrix
        keep = np.argmax(B != 0, axis=0)
        rows = (keep[:, None] * n + keep[None, :]).ravel()
        return Block(d, blk.const[np.ix_(keep, keep)], blk.coef[rows, :])
    coef = blk.coef.tocsc()
    cols = []
    for j in range(coef.shape[1]):
        sl = slice(coef.indptr[j], coef.indptr[j + 1])
        if sl.start == sl.stop:
            cols.append(sp.csc_matrix((d * d, 1)))
            continue
        r, c = np.divmod(coef.indices[sl], n)
        mat = (B[r, :].T * coef.data[sl]) @ B[c, :]
        vec = mat.reshape(-1)
        vec[np.abs(vec) < 1e-15 * max(1.0, np.abs(vec).max())] = 0.0
        cols.append(sp.csc_matrix(vec[:, None]))
    return Block(d, const, sp.hstack(cols, format="csc") if cols else sp.csc_matrix((d * d, 0)))


class InfeasibleFace(ValueError):
    """A constant principal submatrix is not PSD: no feasible point exists."""


def _determined(blk: Block, elim) -> tuple[np.ndarray, np.ndarray]:
    """Mask of entries constant on the affine hull, and their values."""
    n = blk.size
    along = abs(blk.coef @ elim.T)
    moving = np.asarray(along.sum(axis=1)).ravel() > DETERMINED_TOL
    values = blk.const.reshape(-1) + blk.coef @ elim.x0
    return ~moving.reshape(n, n), values.reshape(n, n)


def _clique_kernel(blk: Block, elim) -> np.ndarray | None:
    """Null vectors of constant principal submatrices over maximal cliques."""
    mask, values = _determined(blk, elim)
    n = blk.size
    nodes = [i for i in range(n) if mask[i, i]]
    graph = nx.Graph()
    graph.add_nodes_from(nodes)
    rows, cols = np.nonzero(np.triu(mask, 1))
    graph.add_edges_from((int(i), int(j)) for i, j in zip(rows, cols) if mask[i, i] and mask[j, j])
    vectors = []
    for count, clique in enumerate(nx.find_cliques(graph)):
        if count >= MAX_CLIQUES:
            logger.warning("clique enumeration truncated at %d cliques", MAX_CLIQUES)
            break
        idx = np.sort(np.array(clique))
        sub = values[np.ix_(idx, idx)]
        sub = 0.5 * (sub + sub.T)
        lam, U = np.linalg.eigh(sub)
        scale = max(1.0, abs(lam[-1]))
        if lam[0] < -1e-8 * scale:
            raise InfeasibleFace(f"constant principal submatrix has eigenvalue {lam[0]:.3g}")
        for k in np.flatnonzero(lam <= NULL_TOL * scale):
            v = np.zeros(n)
            v[idx] = U[:, k]
            vectors.append(v)
    if not vectors:
        return None
    V = np.array(vectors).T
    _, R, piv = sla.qr(V, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-9 * diag[0]))
    return V[:, np.sort(piv[:rank])]


def _normalize_kernel(N: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pivot rows ``P`` and the basis ``N (N[P])^{-1}``, which is the identity on ``P``."""
    _, _, piv = sla.qr(N.T, pivoting=True, mode="economic")
    pivots = np.sort(piv[:N.shape[1]])
    K = N @ np.linalg.inv(N[pivots, :])
    K[np.abs(K) < 1e-12] = 0.0
    K[pivots, :] = np.eye(N.shape[1])
    return pivots, K


def _kernel_rows(blk: Block, K: np.ndarray):
    """Rows of ``F(x) K = 0`` and of ``K^T F(x) K`` as sparse maps of ``x``."""
    n, d = blk.size, K.shape[1]
    Ks = sp.csr_matrix(K)
    P = sp.kron(sp.identity(n, format="csr"), Ks.T, format="csr")
    rows = (P @ blk.coef).tocsr()
    const = P @ blk.const.reshape(-1)
    Q = sp.kron(Ks.T, sp.identity(d, format="csr"), format="csr")
    return rows, const, (Q @ rows).tocsr(), Q @ const


def _vanishes_on_affine_hull(qmap: sp.csr_matrix, qconst: np.ndarray, elim, d: int) -> bool:
    """Check that every diagonal entry of ``K^T F(x) K`` is zero on the hull."""
    diag = np.arange(d) * (d + 1)
    qmap, qconst = qmap[diag], qconst[diag]
    scale = 1.0 + (np.abs(qmap).max() if qmap.nnz else 0.0)
    if np.max(np.abs(qmap @ elim.x0 + qconst)) > VERIFY_TOL * scale:
        return False
    along = qmap @ elim.T
    return not along.nnz or float(np.abs(along).max()) <= VERIFY_TOL * scale


def _dedupe_rows(rows: sp.csr_matrix, rhs: np.ndarray):
    keep, seen = [], set()
    rows = rows.tocsr()
    for i in range(rows.shape[0]):
        lo, hi = rows.indptr[i], rows.indptr[i + 1]
        if hi == lo:
            if abs(rhs[i]) > 1e-9:
                raise ValueError("facial reduction produced an inconsistent equality")
            continue
        key = (tuple(rows.indices[lo:hi]), tuple(np.round(rows.data[lo:hi], 12)), round(rhs[i], 12))
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return rows[keep], rhs[keep]


def _row_space(rows: sp.csr_matrix, rhs: np.ndarray, elim):
    """Replace ``rows x = rhs`` by an equivalent well-conditioned system on the hull.

    On the hull the system reads ``(rows T) y = rhs - rows x0``; its dominant
    left singular vectors give independent combinations, and the discarded
    directions are rounding noise of an inexact kernel. The noise sits behind
    the first wide drop of the singular values, so the cut is placed there.
    """
    R = (rows @ elim.T).toarray()
    g = rhs - rows @ elim.x0
    if R.size == 0 or not np.any(R):
        return None
    U, sv, _ = np.linalg.svd(R, full_matrices=False)
    rank = int(np.sum(sv > ROWSPACE_TOL * sv[0]))
    drops = np.nonzero(sv[1:rank] < ROWSPACE_GAP * sv[:rank - 1])[0]
    if drops.size:
        rank = int(drops[0]) + 1
    logger.debug("exposed rows: rank %d of %d, singular values %.2e .. %.2e | next %.2e", rank, R.shape[0],
                 sv[0], sv[rank - 1], sv[rank] if rank < sv.size else 0.0)
    W = U[:, :rank].T / sv[:rank, None]
    return sp.csr_matrix(W @ rows.toarray()), W @ rhs


def margin_problem(problem: SdpProblem) -> SdpProblem:
    """``max s`` s.t. ``F_k(x) - s I >= 0``, ``s <= 1`` and the equalities of ``problem``.

    The margin ``s`` is the last variable. Its dual solution is an exposing
    certificate when the optimum is zero: ``Y >= 0`` with unit trace and
    multipliers ``mu`` such that ``sum_i x_i A_i^*(Y) = -mu^T E x``.
    """
    m = problem.num_vars
    blocks = []
    for blk in problem.blocks:
        shift = sp.csc_matrix(-np.eye(blk.size).reshape(-1, 1))
        blocks.append(Block(blk.size, blk.const, sp.hstack([blk.coef, shift])))
    blocks.append(Block(1, np.ones((1, 1)), sp.csc_matrix(([-1.0], ([0], [m])), shape=(1, m + 1))))
    c = np.zeros(m + 1)
    c[m] = -1.0
    eq = sp.hstack([problem.eq_matrix, sp.csr_matrix((problem.eq_matrix.shape[0], 1))])
    return SdpProblem(m + 1, blocks, c, 0.0, eq, problem.eq_rhs, list(problem.eq_labels))


def solve_margin(problem: SdpProblem, gap_tol: float = 1e-9, feas_tol: float = 1e-10):
    """Solve :func:`margin_problem`; returns the auxiliary problem and its solution."""
    from .solver import SolverOptions, _solve_direct

    aux = margin_problem(problem)
    return aux, _solve_direct(aux, SolverOptions(gap_tol=gap_tol, feas_tol=feas_tol, max_iters=80))


def _margin(problem: SdpProblem):
    """Approximately maximize the smallest eigenvalue margin over the feasible affine set.

    Returns the margin attained at the computed ``x`` and ``x`` itself.
    """
    _, sol = solve_margin(problem)
    x = sol.x[:problem.num_vars]
    # the smallest eigenvalue at x is a margin that x certifies, whatever the solver status
    achieved = min(float(np.linalg.eigvalsh(blk.evaluate(x))[0]) for blk in problem.blocks)
    return achieved, x


def _exposed_kernels(problem: SdpProblem):
    """Per block, an orthonormal kernel shared by all feasible points, or None."""
    s, x = _margin(problem)
    kernels = []
    for blk in problem.blocks:
        lam, U = np.linalg.eigh(blk.evaluate(x))
        scale = max(1.0, abs(lam[-1]))
        if s > SLATER_TOL * scale or blk.size == 1:
            kernels.append(None)
            continue
        d = int(np.sum(lam <= KERNEL_TOL * scale))
        if d == 0 or d == blk.size:
            kernels.append(None)
            continue
        if lam[d] < GAP_TOL * scale:
            logger.warning("no clear spectral gap in a block of size %d (%.2e vs %.2e); left unreduced",
                           blk.size, lam[d - 1], lam[d])
            kernels.append(None)
            continue
        kernels.append(U[:, :d])
    return s, kernels


def _with_rows(current: SdpProblem, blocks, new_rows, new_rhs, label: str) -> SdpProblem:
    eq = sp.vstack([current.eq_matrix, *new_rows], format="csr")
    rhs = np.concatenate([current.eq_rhs, *new_rhs])
    count = sum(r.shape[0] for r in new_rows)
    labels = list(current.eq_labels) + [label] * count if current.eq_labels else []
    return SdpProblem(current.num_vars, blocks, current.c, current.offset, eq, rhs, labels,
                      current.dictionary, current.maximize, current.var_ids)


def reduce_faces(problem: SdpProblem, max_rounds: int = 8, exposed: bool | None = None) -> FacialReduction:
    """Shrink the blocks of ``problem`` to the face that contains its feasible set.

    Clique rounds run first until they stop changing the problem; exposed
    rounds follow, each one followed again by clique rounds on the smaller
    problem. With ``exposed=None`` an exposed round is attempted only once a
    clique round has found a kernel, which spares well-posed problems the
    auxiliary solve; ``True`` always attempts it and ``False`` never does.
    """
    from .solver import _eliminate

    bases = [np.eye(b.size) for b in problem.blocks]
    current = problem
    red = FacialReduction(problem, bases)
    extra_rows, extra_rhs = [], []
    for rnd in range(max_rounds):
        elim = _eliminate(current)
        new_blocks, new_rows, new_rhs, changed = [], [], [], False
        for k, blk in enumerate(current.blocks):
            N = _clique_kernel(blk, elim) if blk.size > 1 else None
            if N is None:
                new_blocks.append(blk)
                continue
            _, _, qmap, qconst = _kernel_rows(blk, N)
            if not _vanishes_on_affine_hull(qmap, qconst, elim, N.shape[1]):
                raise AssertionError("a clique null vector failed verification")
            pivots, K = _normalize_kernel(N)
            rows, const, _, _ = _kernel_rows(blk, K)
            rows, rhs = _dedupe_rows(rows, -const)
            new_rows.append(rows)
            new_rhs.append(rhs)
            retained = np.setdiff1d(np.arange(blk.size), pivots)
            new_blocks.append(compress_block(blk, np.eye(blk.size)[:, retained]))
            red.bases[k] = red.bases[k][:, retained]
            red.steps.append(FaceStep(k, "clique", K.shape[1], rows.shape[0]))
            changed = True
            logger.info("round %d block %d: removed a %d-dimensional implied kernel (size %d -> %d)",
                        rnd, k, K.shape[1], blk.size, len(retained))
        if not changed and (exposed or (exposed is None and red.steps)):
            s, kernels = _exposed_kernels(current)
            for k, (blk, K) in enumerate(zip(current.blocks, kernels)):
                if K is None:
                    new_blocks[k] = blk
                    continue
                rows, const, _, _ = _kernel_rows(blk, K)
                reduced = _row_space(rows, -const, elim)
                if reduced is None:
                    continue
                new_rows.append(reduced[0])
                new_rhs.append(reduced[1])
                V = sla.null_space(K.T)
                new_blocks[k] = compress_block(blk, V)
                red.bases[k] = red.bases[k] @ V
                red.steps.append(FaceStep(k, "exposed", K.shape[1], reduced[0].shape[0], s))
                changed = True
                logger.info("round %d block %d: margin %.2e exposes a %d-dimensional kernel (size %d -> %d)",
                            rnd, k, s, K.shape[1], blk.size, V.shape[1])
        if not changed:
            break
        extra_rows.extend(new_rows)
        extra_rhs.extend(new_rhs)
        current = _with_rows(current, new_blocks, new_rows, new_rhs, f"face|{rnd}")
    red.problem = current
    if extra_rows:
        red.extra_rows = sp.vstack(extra_rows, format="csr")
        red.extra_rhs = np.concatenate(extra_rhs)
    return red
