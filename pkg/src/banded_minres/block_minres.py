"""Progressive block MINRES on top of the banded Lanczos process.

Each step turns one Hessenberg column into one column of ``R`` with a
single Householder reflector, consumes one row of the transformed
right-hand side, and updates every solution column with a rank-one
correction. Only the last ``2p`` reflectors, ``R`` columns and search
directions are kept.
"""

from __future__ import annotations

import logging
import time
import warnings

from collections import deque
from dataclasses import dataclass
from typing import Any

import numpy as np

from .banded_lanczos import BandedLanczos, HessenbergColumn
from .config import SolverConfig
from .exceptions import ConfigError, DimensionMismatch, MaxIterReached, SingularR
from .history import ConvergenceHistory, RunStatus
from .linops import (
    BlockVector,
    HouseholderReflector,
    SymmetricOperator,
    Vector,
    as_block_vector,
    as_operator,
    estimate_norm,
    householder_apply,
    householder_generate,
)

logger = logging.getLogger(__name__)

SINGULAR_R_TOLERANCE = 1e-14


@dataclass(frozen=True, eq=False)
class RColumn:
    """Column ``position`` of ``R``; ``values[k]`` sits in row ``start + k``."""

    position: int
    start: int
    values: Vector

    @property
    def diagonal(self) -> float:
        return float(self.values[-1])

    def value_at(self, row: int) -> float:
        k = row - self.start
        if 0 <= k < self.values.shape[0]:
            return float(self.values[k])
        return 0.0


class BandedQrState:
    """Sliding-window QR factorization of the banded Hessenberg matrix.

    ``zbar`` holds rows ``zbar_start ..`` of ``Q^T E_1 S`` that have not been
    consumed yet; its column norms are the computed residual norms.
    """

    def __init__(self, S: Any) -> None:
        S = np.asarray(S, dtype=np.float64)
        self.p = S.shape[1]
        self.reflectors: deque[HouseholderReflector] = deque(maxlen=2 * self.p)
        self.r_columns: deque[RColumn] = deque(maxlen=2 * self.p)
        self.zbar = S.copy()
        self.zbar_start = 0
        self.initial_energy = float(np.sum(S * S))
        self.consumed_energy = 0.0

    def update(self, column: HessenbergColumn, last: int) -> tuple[RColumn, Vector]:
        """Factor one more column; returns the ``R`` column and the consumed row."""
        p = self.p
        c = column.position
        base = c - 2 * p
        work = np.zeros(3 * p + 1)
        work[column.positions - base] = column.values
        column_norm = float(np.linalg.norm(work))

        for h in self.reflectors:
            lo = h.offset - base
            work[lo : lo + h.span] = householder_apply(h, work[lo : lo + h.span])

        h = householder_generate(work[2 * p : last - base + 1], offset=c)
        work[2 * p : last - base + 1] = householder_apply(h, work[2 * p : last - base + 1])
        self.reflectors.append(h)

        r_cc = work[2 * p]
        if not abs(r_cc) > SINGULAR_R_TOLERANCE * column_norm:
            raise SingularR(
                f'R diagonal {r_cc:.3e} at position {c} is negligible '
                f'against column norm {column_norm:.3e}',
            )
        start = max(0, base)
        r_column = RColumn(position=c, start=start, values=work[start - base : 2 * p + 1].copy())
        self.r_columns.append(r_column)

        # extend Z-bar with zero rows for newly created basis vectors
        rows_needed = last - self.zbar_start + 1
        if rows_needed > self.zbar.shape[0]:
            grown = np.zeros((rows_needed, p))
            grown[: self.zbar.shape[0]] = self.zbar
            self.zbar = grown
        lo = c - self.zbar_start
        self.zbar[lo:] = householder_apply(h, self.zbar[lo:])
        z_row = self.zbar[lo].copy()
        self.zbar = self.zbar[lo + 1 :].copy()
        self.zbar_start = c + 1
        self.consumed_energy += float(z_row @ z_row)
        return r_column, z_row

    def residual_norms(self) -> Vector:
        return np.linalg.norm(self.zbar, axis=0)

    def energy_defect(self) -> float:
        """``|consumed + tail - ||S||_F^2|`` relative to ``||S||_F^2``."""
        tail = float(np.sum(self.zbar * self.zbar))
        return abs(self.consumed_energy + tail - self.initial_energy) / self.initial_energy


class SearchDirectionWindow:
    def __init__(self, p: int) -> None:
        self.directions: deque[tuple[int, Vector]] = deque(maxlen=2 * p)

    def compute(self, u: Vector, r_column: RColumn) -> Vector:
        """``m_c = (u_c - sum r_{i,c} m_i) / r_{c,c}`` over the window."""
        m = u.copy()
        for position, m_i in self.directions:
            r = r_column.value_at(position)
            if r != 0.0:
                m -= r * m_i
        m /= r_column.diagonal
        self.directions.append((r_column.position, m))
        return m


def update_solution(X: BlockVector, m: Vector, z_row: Vector) -> None:
    X += np.multiply.outer(m, z_row)


def computed_residuals(qr: BandedQrState) -> Vector:
    return qr.residual_norms()


def true_residuals(op: SymmetricOperator, B: BlockVector, X: BlockVector) -> Vector:
    return np.linalg.norm(B - op.apply_block(X), axis=0)


class BlockMinres:
    """One block MINRES solve, advanced with :meth:`iterate` or :meth:`run`."""

    def __init__(
        self,
        A: Any,
        B: Any,
        X0: Any | None = None,
        config: SolverConfig | None = None,
        augment: int = 0,
    ) -> None:
        self.config = config or SolverConfig()
        self.op = as_operator(A)
        n = self.op.dim
        B = as_block_vector(B, n)
        self.columns = B.shape[1]
        if augment < 0:
            raise DimensionMismatch(f'augment must be nonnegative, got {augment}')
        if augment:
            rng = np.random.default_rng(self.config.seed + 1)
            B = np.asfortranarray(np.hstack([B, rng.standard_normal((n, augment))]))
        self.B = B
        self.p = B.shape[1]
        if self.p > n:
            raise DimensionMismatch(f'{self.p} right-hand sides exceed dimension {n}')

        if X0 is None:
            self.X = np.zeros((n, self.p), order='F')
            F0 = B
        else:
            X0 = as_block_vector(X0, n)
            if X0.shape[1] == self.columns and augment:
                X0 = np.asfortranarray(np.hstack([X0, np.zeros((n, augment))]))
            if X0.shape != B.shape:
                raise DimensionMismatch(f'X0 has shape {X0.shape}, B has shape {B.shape}')
            self.X = X0
            F0 = B - self.op.apply_block(X0) if np.any(X0) else B

        self.b_norms = np.linalg.norm(B, axis=0)
        self.norm_estimate = estimate_norm(
            self.op,
            self.config.norm_iterations,
            self.config.seed,
        )
        if self.config.gamma is None:
            self.gamma = self.config.gamma_relative * self.norm_estimate
        else:
            self.gamma = self.config.gamma
            if self.gamma >= self.norm_estimate:
                raise ConfigError(
                    f'gamma {self.gamma:.3e} must be below the operator norm '
                    f'estimate {self.norm_estimate:.3e}',
                )
        logger.debug('dependence tolerance gamma=%.3e', self.gamma)

        self.lanczos = BandedLanczos(
            self.op,
            F0,
            gamma=self.gamma,
            norm_estimate=self.norm_estimate,
            config=self.config,
        )
        self.qr = BandedQrState(self.lanczos.S)
        self.directions = SearchDirectionWindow(self.p)
        self.history = ConvergenceHistory(
            columns=self.p,
            tol=self.config.tol,
            b_norms=self.b_norms,
            operator_norm=self.norm_estimate,
            gamma=self.gamma,
            augmented=augment,
        )
        self.history.record(0, self.qr.residual_norms() / self.b_norms)
        self.iteration = 0

    def _relative(self, residuals: Vector) -> Vector:
        return residuals / self.b_norms

    def converged(self) -> bool:
        if self.config.tol == 0.0:
            return False
        target = self.history.computed[-1][: self.columns]
        return bool(np.all(target <= self.config.tol))

    def iterate(self) -> HessenbergColumn:
        """Advance by one Lanczos step and one QR column."""
        if self.lanczos.pending_replacement is not None:
            self.lanczos.replace_dependent()
        column, event = self.lanczos.step()
        if event is not None:
            self.history.events.append(event)

        r_column, z_row = self.qr.update(column, self.lanczos.last_position)
        m = self.directions.compute(self.lanczos.vector(column.index), r_column)
        update_solution(self.X, m, z_row)
        self.iteration += 1

        computed = self._relative(self.qr.residual_norms())
        true = None
        every = self.config.true_residual_check_every
        if every and self.iteration % every == 0:
            true = self._relative(true_residuals(self.op, self.B, self.X))
        self.history.record(self.iteration, computed, true)
        logger.debug(
            'iteration %d: max computed relative residual %.3e',
            self.iteration,
            float(computed.max()),
        )
        return column

    def run(self) -> tuple[BlockVector, ConvergenceHistory]:
        start = time.perf_counter()
        status = RunStatus.MAX_ITER
        if self.converged():
            status = RunStatus.CONVERGED
        while status is RunStatus.MAX_ITER and self.iteration < self.config.max_iter:
            self.iterate()
            if self.converged():
                status = RunStatus.CONVERGED
            elif self.lanczos.exhausted:
                status = RunStatus.EXHAUSTED
        self.history.finish(status, time.perf_counter() - start)

        if status is RunStatus.MAX_ITER and self.config.tol > 0.0:
            warnings.warn(
                MaxIterReached(
                    f'{self.iteration} iterations without convergence; '
                    f'{int(self.history.converged.sum())} of {self.p} columns converged',
                ),
                stacklevel=3,
            )
        logger.info(
            'block MINRES finished: %s after %d iterations (%d breakdowns)',
            status.value,
            self.iteration,
            len(self.history.events),
        )
        return self.X[:, : self.columns].copy(order='F'), self.history


def solve(
    A: Any,
    B: Any,
    X0: Any | None = None,
    config: SolverConfig | None = None,
    augment: int = 0,
) -> tuple[BlockVector, ConvergenceHistory]:
    """Solve ``A X = B`` for symmetric ``A`` by block MINRES.

    Each returned column minimizes its own residual over the shared block
    Krylov space. With ``augment=k`` the block is padded with ``k`` random
    columns; they take part in the iteration and in the history, but only
    the original columns are returned and checked for convergence.

    Warns:
        MaxIterReached: If ``tol > 0`` and ``max_iter`` steps did not reach it.
    """
    return BlockMinres(A, B, X0=X0, config=config, augment=augment).run()


def minres_single(
    A: Any,
    b: Any,
    x0: Any | None = None,
    config: SolverConfig | None = None,
) -> tuple[Vector, ConvergenceHistory]:
    """Single right-hand-side MINRES through the block code path with ``p = 1``."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1:
        raise DimensionMismatch(f'expected a vector right-hand side, got shape {b.shape}')
    X, history = solve(A, b, X0=x0, config=config)
    return X[:, 0].copy(), history
