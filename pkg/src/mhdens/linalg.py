"""Sparse direct solver with a factor-once, solve-many interface.

Backed by SuperLU (scipy.sparse.linalg.splu) with COLAMD ordering and
partial pivoting.  The multi right-hand-side entry point is what turns a
shared coefficient matrix into actual runtime savings.
"""

from __future__ import annotations

from typing import Sequence, TextIO

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.sparse.linalg import splu

PIVOT_RTOL = 1e-13


class SingularMatrixError(RuntimeError):
    """Factorization hit a (numerically) singular pivot."""

    def __init__(self, pivot: int | None, detail: str = ""):
        self.pivot = pivot
        where = f"pivot {pivot}" if pivot is not None else "unknown pivot"
        super().__init__(f"matrix is numerically singular at {where}{detail}")


class Factorization:
    """Opaque LU factors of a square sparse matrix, immutable once built."""

    def __init__(self, lu, n: int):
        self._lu = lu
        self.n = n

    def solve(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape[0] != self.n:
            raise ValueError(f"rhs length {rhs.shape[0]} does not match system size {self.n}")
        return self._lu.solve(rhs)


def factorize(matrix: sp.spmatrix) -> Factorization:
    """LU-factorize with fill-reducing ordering; reusable across solves.

    Raises SingularMatrixError when a pivot is exactly zero or smaller
    than PIVOT_RTOL relative to the largest matrix entry.
    """
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"matrix must be square, got shape {matrix.shape}")
    csc = sp.csc_matrix(matrix)
    csc.sort_indices()
    try:
        lu = splu(csc, permc_spec="COLAMD")
    except RuntimeError as err:  # SuperLU reports exact singularity this way
        raise SingularMatrixError(None, f" ({err})") from err
    scale = np.max(np.abs(csc.data)) if csc.nnz else 0.0
    diag = np.abs(lu.U.diagonal())
    bad = np.flatnonzero(diag <= PIVOT_RTOL * scale)
    if bad.size:
        raise SingularMatrixError(int(bad[0]))
    return Factorization(lu, csc.shape[0])


def solve_multi(
    fact: Factorization, rhs_set: Sequence[NDArray[np.float64]]
) -> list[NDArray[np.float64]]:
    """Solve one system per right-hand side against a shared factorization.

    All right-hand sides are forwarded to the backend as one block, so a
    batch of one is bitwise identical to a plain solve and results do not
    depend on batch order.
    """
    if len(rhs_set) == 0:
        return []
    block = np.column_stack([np.asarray(r, dtype=np.float64) for r in rhs_set])
    if block.shape[0] != fact.n:
        raise ValueError(
            f"rhs length {block.shape[0]} does not match system size {fact.n}"
        )
    sols = fact.solve(block)
    return [np.ascontiguousarray(sols[:, j]) for j in range(sols.shape[1])]


def dump_matrix(matrix: sp.spmatrix, stream: TextIO) -> None:
    """Coordinate-format text dump: one ``row col value`` line per entry."""
    coo = matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        stream.write(f"{i} {j} {v!r}\n")
