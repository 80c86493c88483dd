"""Shared fixtures and the acceptance summary printed at the end of a run."""
from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from marginal_selftest.sdp import Block, SdpProblem

CRITERIA: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    """Store one acceptance line; the last record for a criterion wins."""
    CRITERIA[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def dense_block(const, mats) -> Block:
    """Block ``const + sum_i x_i mats[i]`` from dense symmetric matrices."""
    const = np.asarray(const, dtype=float)
    n = const.shape[0]
    coef = np.column_stack([np.asarray(m, dtype=float).reshape(-1) for m in mats]) if mats else np.zeros((n * n, 0))
    return Block(n, const, sp.csc_matrix(coef))


def problem(blocks, c, eq=None, rhs=None, maximize=False, offset=0.0) -> SdpProblem:
    c = np.asarray(c, dtype=float)
    if maximize:
        c, offset = -c, -offset
    return SdpProblem(len(c), blocks, c, offset, None if eq is None else sp.csr_matrix(np.atleast_2d(eq)),
                      None if rhs is None else np.atleast_1d(np.asarray(rhs, dtype=float)), maximize=maximize)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
