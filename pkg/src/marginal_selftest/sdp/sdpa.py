"""SDPA sparse (``.dat-s``) export and import.

SDPA's primal standard form is::

    minimize    sum_i c_i x_i
    subject to  X = sum_i F_i x_i - F_0 >= 0

with free ``x``. A block ``C + sum_i x_i A_i >= 0`` of an
:class:`~.problem.SdpProblem` becomes ``F_0 = -C``, ``F_i = A_i``. The
equalities ``E x = b`` become one extra diagonal block holding ``E x - b``
followed by ``b - E x``. The objective constant and the sense do not fit the
format; they are recorded in header comments together with the variable
dictionary and the equality labels, which lets :func:`parse_sdpa` rebuild the
original problem exactly.

Numbers are written with 17 significant digits, enough to round-trip every
double.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .problem import Block, SdpProblem

_FMT = "{:.16e}"


def _num(v: float) -> str:
    return _FMT.format(float(v))


def _is_diagonal(blk: Block) -> bool:
    n = blk.size
    if n == 1:
        return True
    if np.count_nonzero(blk.const - np.diag(np.diag(blk.const))):
        return False
    r, s = np.divmod(blk.coef.tocoo().row, blk.size)
    return bool(np.all(r == s))


def export_sdpa(problem: SdpProblem) -> str:
    """Text of the problem in SDPA sparse format, with documenting header comments."""
    m = problem.num_vars
    neq = len(problem.eq_rhs)
    lines = [
        '" affine PSD-block problem in SDPA sparse format',
        "* conversion: block k of the form C + sum_i x_i A_i >= 0 is written as F_0 = -C, F_i = A_i",
        "* conversion: equalities E x = b form the last diagonal block [E x - b; b - E x] >= 0",
        f"* sense {problem.sense}",
        f"* objective-offset {_num(problem.offset)}",
        "* objective: minimize c^T x + offset (values of a maximization are negated)",
        f"* equality-block {len(problem.blocks) + 1 if neq else 0} rows {neq}",
    ]
    for j, label in enumerate(problem.eq_labels):
        lines.append(f"* label {j + 1} {label}")
    for i in range(m):
        if i in problem.dictionary:
            lines.append(f"* var {i + 1} {problem.dictionary[i]}")
    if problem.var_ids is not None:
        lines.append("* var-ids " + " ".join(str(int(v)) for v in problem.var_ids))

    diag = [_is_diagonal(b) for b in problem.blocks]
    sizes = [(-b.size if d else b.size) for b, d in zip(problem.blocks, diag)]
    if neq:
        sizes.append(-2 * neq)
    lines.append(str(m))
    lines.append(str(len(sizes)))
    lines.append(" ".join(str(s) for s in sizes))
    lines.append(" ".join(_num(v) for v in problem.c))

    entries = []
    for k, (blk, d) in enumerate(zip(problem.blocks, diag), start=1):
        n = blk.size
        iu = [(i, i) for i in range(n)] if d else [(i, j) for i in range(n) for j in range(i, n)]
        rows = np.array([i * n + j for i, j in iu], dtype=np.int64)
        rows_t = np.array([j * n + i for i, j in iu], dtype=np.int64)
        const = 0.5 * (blk.const + blk.const.T)
        for (i, j) in iu:
            if const[i, j] != 0.0:
                entries.append((0, k, i + 1, j + 1, -const[i, j]))
        coef = sp.csr_matrix(blk.coef)
        upper = 0.5 * (coef[rows] + coef[rows_t])
        upper = sp.csc_matrix(upper)
        for var in range(m):
            sl = slice(upper.indptr[var], upper.indptr[var + 1])
            for r, v in zip(upper.indices[sl], upper.data[sl]):
                if v != 0.0:
                    i, j = iu[r]
                    entries.append((var + 1, k, i + 1, j + 1, v))
    if neq:
        k = len(problem.blocks) + 1
        b = problem.eq_rhs
        for j in range(neq):
            if b[j] != 0.0:
                entries.append((0, k, j + 1, j + 1, b[j]))
                entries.append((0, k, neq + j + 1, neq + j + 1, -b[j]))
        E = sp.csc_matrix(problem.eq_matrix)
        for var in range(m):
            sl = slice(E.indptr[var], E.indptr[var + 1])
            for j, v in zip(E.indices[sl], E.data[sl]):
                if v != 0.0:
                    entries.append((var + 1, k, j + 1, j + 1, v))
                    entries.append((var + 1, k, neq + j + 1, neq + j + 1, -v))
    entries.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    for mat, blk, i, j, v in entries:
        lines.append(f"{mat} {blk} {i} {j} {_num(v)}")
    return "\n".join(lines) + "\n"


def write_sdpa(problem: SdpProblem, path) -> None:
    with open(path, "w") as fh:
        fh.write(export_sdpa(problem))


def _numbers(line: str) -> list[str]:
    return line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ").split()


def parse_sdpa(text: str) -> SdpProblem:
    """Rebuild a problem from :func:`export_sdpa` output.

    Files without our header comments are read as plain SDPA problems with
    no equalities, offset zero and the minimization sense.
    """
    sense, offset, eq_block, neq = "min", 0.0, 0, 0
    labels: dict[int, str] = {}
    dictionary: dict[int, str] = {}
    var_ids = None
    data = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line[0] in '"*':
            parts = line[1:].strip().split(" ", 2)
            key = parts[0] if parts else ""
            if key == "sense":
                sense = parts[1]
            elif key == "objective-offset":
                offset = float(parts[1])
            elif key == "equality-block":
                eq_block = int(parts[1])
                neq = int(parts[2].split()[1])
            elif key == "label":
                labels[int(parts[1]) - 1] = parts[2] if len(parts) > 2 else ""
            elif key == "var":
                dictionary[int(parts[1]) - 1] = parts[2] if len(parts) > 2 else ""
            elif key == "var-ids":
                var_ids = np.array([int(v) for v in line[1:].split()[1:]], dtype=np.int64)
            continue
        data.append(line)
    m = int(_numbers(data[0])[0])
    nblocks = int(_numbers(data[1])[0])
    sizes = [int(s) for s in _numbers(data[2])[:nblocks]]
    c = np.array([float(v) for v in _numbers(data[3])[:m]])
    consts = [np.zeros((abs(s), abs(s))) for s in sizes]
    coefs = [dict() for _ in sizes]
    for line in data[4:]:
        mat, blk, i, j, v = _numbers(line)[:5]
        mat, blk, i, j, v = int(mat), int(blk) - 1, int(i) - 1, int(j) - 1, float(v)
        if mat == 0:
            consts[blk][i, j] = consts[blk][j, i] = -v
        else:
            coefs[blk][(mat - 1, i, j)] = v

    blocks = []
    eq_rows = None
    for k, size in enumerate(sizes):
        n = abs(size)
        if eq_block and k == eq_block - 1:
            E = sp.lil_matrix((neq, m))
            for (var, i, _), v in coefs[k].items():
                if i < neq:
                    E[i, var] = v
            b = -np.diag(consts[k])[:neq]
            eq_rows = (sp.csr_matrix(E), b)
            continue
        rows, cols, vals = [], [], []
        for (var, i, j), v in coefs[k].items():
            rows.append(i * n + j)
            cols.append(var)
            vals.append(v)
            if i != j:
                rows.append(j * n + i)
                cols.append(var)
                vals.append(v)
        coef = sp.csc_matrix((vals, (rows, cols)), shape=(n * n, m))
        blocks.append(Block(n, consts[k], coef))
    eq_matrix, eq_rhs = eq_rows if eq_rows is not None else (None, None)
    label_list = [labels.get(j, "") for j in range(neq)] if labels else []
    return SdpProblem(m, blocks, c, offset, eq_matrix, eq_rhs, label_list, dictionary,
                      sense == "max", var_ids)


def read_sdpa(path) -> SdpProblem:
    with open(path) as fh:
        return parse_sdpa(fh.read())
