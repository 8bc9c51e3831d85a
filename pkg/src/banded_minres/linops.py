"""Dense and sparse kernels shared by the solver layers.

A block vector is a column-major ``(n, p)`` float64 array; ``X[:, i]`` is a
contiguous view of column ``i``. Every operator handed to the solver
satisfies :class:`SymmetricOperator`.
"""

from __future__ import annotations

import logging

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Protocol, runtime_checkable

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from .exceptions import DimensionMismatch, NotSymmetric, RankDeficientStart

logger = logging.getLogger(__name__)

Vector = npt.NDArray[np.float64]
BlockVector = npt.NDArray[np.float64]

GAMMA_START = 1e-12


def as_block_vector(X: Any, n: int | None = None) -> BlockVector:
    """Return ``X`` as a column-major float64 block vector.

    One-dimensional input becomes a single column.
    """
    block = np.array(X, dtype=np.float64, order='F', ndmin=1, copy=True)
    if block.ndim == 1:
        block = block.reshape(-1, 1, order='F')
    if block.ndim != 2:
        raise DimensionMismatch(f'expected a block vector, got shape {block.shape}')
    if n is not None and block.shape[0] != n:
        raise DimensionMismatch(
            f'block vector has {block.shape[0]} rows, operator has dimension {n}',
        )
    return block


@runtime_checkable
class SymmetricOperator(Protocol):
    """A symmetric linear map on R^n.

    ``apply_block(X)[:, i]`` must equal ``apply_one(X[:, i])`` bitwise.
    """

    @property
    def dim(self) -> int: ...

    def apply_one(self, x: Vector) -> Vector: ...

    def apply_block(self, X: BlockVector) -> BlockVector: ...


@dataclass(frozen=True, eq=False)
class CsrSymmetricMatrix:
    """Symmetric matrix in compressed-row form, both triangles stored."""

    n: int
    row_offsets: npt.NDArray[np.int64]
    col_indices: npt.NDArray[np.int64]
    values: Vector

    def __post_init__(self) -> None:
        offsets = self.row_offsets
        if offsets.shape != (self.n + 1,):
            raise DimensionMismatch(
                f'row_offsets must have {self.n + 1} entries, got {offsets.shape[0]}',
            )
        if offsets[0] != 0 or offsets[-1] != self.values.shape[0]:
            raise DimensionMismatch('row_offsets must start at 0 and end at nnz')
        if np.any(np.diff(offsets) < 0):
            raise DimensionMismatch('row_offsets must be nondecreasing')
        if self.col_indices.shape != self.values.shape:
            raise DimensionMismatch('col_indices and values differ in length')
        if self.col_indices.size and (
            self.col_indices.min() < 0 or self.col_indices.max() >= self.n
        ):
            raise DimensionMismatch('column index out of range')
        steps = np.diff(self.col_indices)
        row_starts = offsets[1:-1]
        interior = np.ones(steps.shape, dtype=bool)
        interior[row_starts[(row_starts > 0) & (row_starts < self.values.size)] - 1] = False
        if np.any(steps[interior] <= 0):
            raise DimensionMismatch('column indices must increase strictly within a row')

    @classmethod
    def from_scipy(
        cls,
        matrix: sp.spmatrix | sp.sparray,
        check_symmetry: bool = True,
    ) -> CsrSymmetricMatrix:
        csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        if csr.shape[0] != csr.shape[1]:
            raise DimensionMismatch(f'matrix must be square, got {csr.shape}')
        csr.sum_duplicates()
        csr.sort_indices()
        if check_symmetry and (csr != csr.T).nnz:
            raise NotSymmetric('matrix is not symmetric')
        return cls(
            n=csr.shape[0],
            row_offsets=csr.indptr.astype(np.int64),
            col_indices=csr.indices.astype(np.int64),
            values=csr.data,
        )

    @classmethod
    def from_dense(cls, dense: Any) -> CsrSymmetricMatrix:
        return cls.from_scipy(sp.csr_matrix(np.asarray(dense, dtype=np.float64)))

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.n, self.n),
        )

    @property
    def dim(self) -> int:
        return self.n

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def is_symmetric(self) -> bool:
        return (self.csr != self.csr.T).nnz == 0

    def diagonal(self) -> Vector:
        return self.csr.diagonal()

    def toarray(self) -> npt.NDArray[np.float64]:
        return self.csr.toarray()

    def shifted(self, sigma: float) -> CsrSymmetricMatrix:
        """Return ``self - sigma * I``."""
        return CsrSymmetricMatrix.from_scipy(
            self.csr - sigma * sp.identity(self.n, format='csr'),
            check_symmetry=False,
        )

    def scaled(self, alpha: float) -> CsrSymmetricMatrix:
        return CsrSymmetricMatrix.from_scipy(alpha * self.csr, check_symmetry=False)

    def apply_one(self, x: Vector) -> Vector:
        return csr_matvec(self, x)

    def apply_block(self, X: BlockVector) -> BlockVector:
        return csr_block_matvec(self, X)


def csr_matvec(A: CsrSymmetricMatrix, x: Vector) -> Vector:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise DimensionMismatch(f'vector of shape {x.shape} for operator of dimension {A.n}')
    return np.asarray(A.csr @ np.ascontiguousarray(x))


def csr_block_matvec(A: CsrSymmetricMatrix, X: BlockVector) -> BlockVector:
    # one sweep over A for all columns; scipy accumulates each column in the
    # same order as the single-vector kernel
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != A.n:
        raise DimensionMismatch(
            f'block vector of shape {X.shape} for operator of dimension {A.n}',
        )
    return np.asfortranarray(A.csr @ np.ascontiguousarray(X))


def as_operator(obj: Any) -> SymmetricOperator:
    """Coerce a dense array, scipy sparse matrix or operator to an operator."""
    if isinstance(obj, SymmetricOperator):
        return obj
    if sp.issparse(obj):
        return CsrSymmetricMatrix.from_scipy(obj)
    return CsrSymmetricMatrix.from_dense(obj)


def thin_qr(
    F: BlockVector,
    gamma_start: float = GAMMA_START,
) -> tuple[BlockVector, npt.NDArray[np.float64]]:
    """Thin QR of ``F`` by modified Gram-Schmidt with one reorthogonalization.

    ``S`` is upper triangular with a nonnegative diagonal.

    Raises:
        RankDeficientStart: If a column is dependent on its predecessors to
            within ``gamma_start`` relative to its own norm.
    """
    Q = as_block_vector(F)
    n, p = Q.shape
    if p > n:
        raise DimensionMismatch(f'cannot factor {n}x{p} block with more columns than rows')

    column_norms = np.linalg.norm(Q, axis=0)
    S = np.zeros((p, p))
    for k in range(p):
        for _ in range(2):
            for i in range(k):
                c = Q[:, i] @ Q[:, k]
                S[i, k] += c
                Q[:, k] -= c * Q[:, i]
        norm = float(np.linalg.norm(Q[:, k]))
        if norm <= gamma_start * column_norms[k]:
            raise RankDeficientStart(
                f'starting block column {k} is linearly dependent '
                f'(residual norm {norm:.3e} of {column_norms[k]:.3e})',
            )
        S[k, k] = norm
        Q[:, k] /= norm
    return Q, S


@dataclass(frozen=True, eq=False)
class HouseholderReflector:
    """``I - beta v v^T`` acting on rows ``offset .. offset + len(v) - 1``.

    ``v[0] == 1``; ``beta == 0`` is the identity.
    """

    v: Vector
    beta: float
    offset: int = 0

    @property
    def span(self) -> int:
        return int(self.v.shape[0])


def householder_generate(c: Vector, offset: int = 0) -> HouseholderReflector:
    """Reflector mapping ``c`` onto ``(norm(c), 0, ..., 0)``."""
    c = np.asarray(c, dtype=np.float64)
    v = c.copy()
    v[0] = 1.0
    head = float(c[0])
    sigma = float(c[1:] @ c[1:])
    if sigma == 0.0:
        # already a multiple of e1: identity, or a pure sign flip
        return HouseholderReflector(v=v, beta=0.0 if head >= 0.0 else 2.0, offset=offset)

    mu = np.sqrt(head * head + sigma)
    v0 = head - mu if head <= 0.0 else -sigma / (head + mu)
    beta = 2.0 * v0 * v0 / (sigma + v0 * v0)
    v[1:] = c[1:] / v0
    return HouseholderReflector(v=v, beta=float(beta), offset=offset)


def householder_apply(h: HouseholderReflector, c: Vector) -> Vector:
    c = np.asarray(c, dtype=np.float64)
    if c.shape[0] != h.span:
        raise DimensionMismatch(
            f'segment of length {c.shape[0]} for reflector spanning {h.span} rows',
        )
    if h.beta == 0.0:
        return c.copy()
    return c - h.beta * np.multiply.outer(h.v, h.v @ c)


def estimate_norm(op: SymmetricOperator, iterations: int = 10, seed: int = 0) -> float:
    """Power-iteration estimate of ``||A||_2`` (a lower bound)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.dim)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iterations):
        y = op.apply_one(x)
        estimate = float(np.linalg.norm(y))
        if estimate == 0.0:
            break
        x = y / estimate
    logger.debug('operator norm estimate %.6e after %d iterations', estimate, iterations)
    return estimate
