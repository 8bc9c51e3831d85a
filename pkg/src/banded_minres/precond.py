"""Zero-fill incomplete Cholesky and the split-preconditioned operator."""

from __future__ import annotations

import logging
import math

from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import DimensionMismatch, PivotBreakdown, ZeroDiagonal
from .linops import (
    BlockVector,
    CsrSymmetricMatrix,
    SymmetricOperator,
    Vector,
    as_block_vector,
    as_operator,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Ic0Factor:
    """Lower-triangular ``L`` with ``L L^T`` approximating the factored matrix."""

    L: sp.csr_matrix

    def __post_init__(self) -> None:
        L = sp.csr_matrix(self.L, dtype=np.float64)
        if L.shape[0] != L.shape[1]:
            raise DimensionMismatch(f'factor must be square, got {L.shape}')
        if sp.triu(L, k=1).nnz:
            raise DimensionMismatch('factor must be lower triangular')
        zero = np.flatnonzero(L.diagonal() == 0.0)
        if zero.size:
            raise ZeroDiagonal(int(zero[0]))
        object.__setattr__(self, 'L', L)

    @property
    def dim(self) -> int:
        return int(self.L.shape[0])

    @cached_property
    def _lu(self) -> Any:
        # natural ordering and diagonal pivots keep the triangular structure
        return spla.splu(self.L.tocsc(), permc_spec='NATURAL', diag_pivot_thresh=0.0)

    def solve(self, b: Vector, transposed: bool = False) -> Vector:
        return self._lu.solve(np.ascontiguousarray(b), trans='T' if transposed else 'N')


def ic0_factorize(M: CsrSymmetricMatrix | Any) -> Ic0Factor:
    """IC(0) of a symmetric matrix, restricted to its lower-triangular pattern.

    Raises:
        PivotBreakdown: If a pivot is not positive.
    """
    if not isinstance(M, CsrSymmetricMatrix):
        M = as_operator(M)
        if not isinstance(M, CsrSymmetricMatrix):
            raise DimensionMismatch('IC(0) needs an explicitly stored matrix')
    lower = sp.tril(M.csr, format='csr')
    lower.sort_indices()

    n = M.n
    rows: list[dict[int, float]] = []
    indptr, indices, data = lower.indptr, lower.indices, lower.data
    for i in range(n):
        entries = {
            int(k): float(v)
            for k, v in zip(
                indices[indptr[i] : indptr[i + 1]],
                data[indptr[i] : indptr[i + 1]],
                strict=True,
            )
        }
        row: dict[int, float] = {}
        for k in sorted(entries):
            if k == i:
                break
            pivot_row = rows[k]
            s = entries[k]
            small, large = (row, pivot_row) if len(row) < len(pivot_row) else (pivot_row, row)
            for m, v in small.items():
                if m < k and m in large:
                    s -= v * large[m]
            row[k] = s / pivot_row[k]
        pivot = entries.get(i, 0.0) - sum(v * v for v in row.values())
        if not pivot > 0.0:
            raise PivotBreakdown(i, pivot)
        row[i] = math.sqrt(pivot)
        rows.append(row)

    counts = np.array([len(r) for r in rows], dtype=np.int64)
    indptr_out = np.concatenate([[0], np.cumsum(counts)])
    indices_out = np.fromiter((k for r in rows for k in r), dtype=np.int64, count=indptr_out[-1])
    data_out = np.fromiter((v for r in rows for v in r.values()), dtype=np.float64, count=indptr_out[-1])
    L = sp.csr_matrix((data_out, indices_out, indptr_out), shape=(n, n))
    L.sort_indices()
    logger.debug('IC(0) factor of order %d with %d nonzeros', n, L.nnz)
    return Ic0Factor(L)


def tri_solve(factor: Ic0Factor, b: Vector, transposed: bool = False) -> Vector:
    """Solve ``L y = b`` (or ``L^T y = b``)."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (factor.dim,):
        raise DimensionMismatch(f'vector of shape {b.shape} for factor of order {factor.dim}')
    return factor.solve(b, transposed)


class SplitPreconditionedOperator:
    """``x -> L^{-1} A L^{-T} x``, symmetric whenever ``A`` is."""

    def __init__(self, A: SymmetricOperator, factor: Ic0Factor) -> None:
        if A.dim != factor.dim:
            raise DimensionMismatch(
                f'operator of dimension {A.dim} with factor of order {factor.dim}',
            )
        self.A = A
        self.factor = factor

    @property
    def dim(self) -> int:
        return self.A.dim

    def apply_one(self, x: Vector) -> Vector:
        y = tri_solve(self.factor, x, transposed=True)
        return tri_solve(self.factor, self.A.apply_one(y))

    def apply_block(self, X: BlockVector) -> BlockVector:
        Y = self.solution_recover(X)
        return self.rhs_transform(self.A.apply_block(Y))

    def _columnwise(self, X: Any, transposed: bool) -> BlockVector:
        X = as_block_vector(X, self.dim)
        out = np.empty_like(X, order='F')
        for i in range(X.shape[1]):
            out[:, i] = self.factor.solve(X[:, i], transposed)
        return out

    def rhs_transform(self, B: Any) -> BlockVector:
        """``L^{-1} B``."""
        return self._columnwise(B, transposed=False)

    def solution_recover(self, Y: Any) -> BlockVector:
        """``L^{-T} Y``."""
        return self._columnwise(Y, transposed=True)

    def rhs_restore(self, B_tilde: Any) -> BlockVector:
        """``L B~``, the inverse of :meth:`rhs_transform`."""
        B_tilde = as_block_vector(B_tilde, self.dim)
        return np.asfortranarray(self.factor.L @ B_tilde)


def compose_split(A: Any, factor: Ic0Factor) -> SplitPreconditionedOperator:
    return SplitPreconditionedOperator(as_operator(A), factor)


def identity_factor(n: int) -> Ic0Factor:
    return Ic0Factor(sp.identity(n, format='csr'))
