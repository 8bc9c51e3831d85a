"""The banded Lanczos process with a fixed window of 2p vectors.

Global indices are 0-based: the starting block supplies ``u_0 .. u_{p-1}``
and step ``j`` produces candidate ``u_{j+p}``. Under the shrink policy a
dependent candidate is retired and so is every later index in its lane
(``i % p``); indices are never renumbered. Vectors that exist receive
consecutive *positions* in creation order, which is the coordinate system
the QR update works in.
"""

from __future__ import annotations

import logging

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import numpy.typing as npt

from .config import BreakdownPolicy, SolverConfig
from .exceptions import ReplacementExhausted
from .linops import BlockVector, SymmetricOperator, Vector, thin_qr

logger = logging.getLogger(__name__)

EXACT_DEPENDENCE_FACTOR = 10.0


class BreakdownKind(Enum):
    EXACT = 'exact'
    NEAR = 'near'


class PolicyApplied(Enum):
    RANDOM_REPLACEMENT = 'replace'
    BLOCK_SHRINK = 'shrink'


@dataclass(frozen=True)
class BreakdownEvent:
    iteration: int
    index: int
    kind: BreakdownKind
    h_value: float
    policy_applied: PolicyApplied


@dataclass(frozen=True, eq=False)
class HessenbergColumn:
    """Column ``index`` of the banded Hessenberg matrix.

    ``rows`` are global indices of the stored entries, ``positions`` the
    matching compact positions. Rows of retired indices are absent; a
    replaced candidate keeps its row with an explicit zero.
    """

    index: int
    position: int
    rows: npt.NDArray[np.int64]
    positions: npt.NDArray[np.int64]
    values: Vector
    subdiag_norm: float


@dataclass
class RetainedVector:
    index: int
    vector: Vector
    expiry: int


class SubdiagonalCache:
    """p x p column FIFO of recent subdiagonal blocks.

    Column ``l`` holds ``h_{i+1,i} .. h_{i+p,i}`` for ``i = j - p + l`` when
    step ``j`` is about to run, so ``h_{j,i}`` sits on the antidiagonal.
    """

    def __init__(self, p: int) -> None:
        self.p = p
        self.C = np.zeros((p, p), order='F')

    def push(self, subdiagonal: Vector) -> None:
        self.C[:, :-1] = self.C[:, 1:]
        self.C[:, -1] = subdiagonal

    def superdiagonal(self) -> Vector:
        """``h_{j, j-p+l}`` for ``l = 0 .. p-1``."""
        p = self.p
        return self.C[p - 1 - np.arange(p), np.arange(p)].copy()


@dataclass
class LanczosWindow:
    """Live Lanczos vectors keyed by global index, plus retained vectors."""

    capacity: int
    slots: dict[int, Vector] = field(default_factory=dict)
    retained: list[RetainedVector] = field(default_factory=list)

    def push(self, index: int, vector: Vector) -> None:
        self.slots[index] = vector
        while len(self.slots) > self.capacity:
            del self.slots[next(iter(self.slots))]

    def get(self, index: int) -> Vector | None:
        return self.slots.get(index)

    def evict_before(self, index: int) -> None:
        for stale in [i for i in self.slots if i < index]:
            del self.slots[stale]

    def retain(self, index: int, vector: Vector, expiry: int) -> None:
        self.retained.append(RetainedVector(index, vector, expiry))

    def drop_expired(self, step: int) -> None:
        kept = [r for r in self.retained if step < r.expiry]
        for r in self.retained:
            if step >= r.expiry:
                logger.debug('retained vector %d expired at step %d', r.index, step)
        self.retained = kept

    def basis(self) -> list[Vector]:
        return [*self.slots.values(), *(r.vector for r in self.retained)]


def _project_out(w: Vector, basis: list[Vector], passes: int = 2) -> Vector:
    for _ in range(passes):
        for u in basis:
            w -= (u @ w) * u
    return w


class BandedLanczos:
    """Stateful banded Lanczos process driven one step at a time.

    After :meth:`step` returns a breakdown under the replace policy, the
    caller installs the replacement with :meth:`replace_dependent` before
    the next step.
    """

    def __init__(
        self,
        op: SymmetricOperator,
        F0: BlockVector,
        gamma: float,
        norm_estimate: float,
        config: SolverConfig | None = None,
    ) -> None:
        self.config = config or SolverConfig()
        self.op = op
        self.n = op.dim
        U, self.S = thin_qr(F0, self.config.gamma_start)
        self.p = U.shape[1]
        self.gamma = gamma
        self.norm_estimate = norm_estimate
        self.exact_threshold = (
            EXACT_DEPENDENCE_FACTOR * np.sqrt(self.n) * np.finfo(float).eps * norm_estimate
        )

        self.window = LanczosWindow(capacity=2 * self.p)
        self.cache = SubdiagonalCache(self.p)
        self.positions: dict[int, int] = {}
        self.next_position = 0
        self.retired_from: dict[int, int] = {}
        self.pending_replacement: int | None = None
        self.j = 0
        self.steps = 0
        self.last_event: BreakdownEvent | None = None

        self._rng = np.random.default_rng(self.config.seed)
        self._cached_block = -1
        self._W: dict[int, Vector] = {}

        self.pool: list[Vector] = []
        for i in range(self.p):
            self._install(i, U[:, i].copy())
        for _ in range(self.config.pool_size):
            r = _project_out(self._rng.standard_normal(self.n), self.window.basis())
            self.pool.append(r / np.linalg.norm(r))

    @property
    def last_position(self) -> int:
        return self.next_position - 1

    def is_retired(self, index: int) -> bool:
        start = self.retired_from.get(index % self.p)
        return start is not None and index >= start

    def _alive(self, index: int) -> bool:
        return index >= 0 and not self.is_retired(index)

    @property
    def effective_block_size(self) -> int:
        return sum(1 for i in range(self.j, self.j + self.p) if not self.is_retired(i))

    @property
    def exhausted(self) -> bool:
        return self.effective_block_size == 0

    def vector(self, index: int) -> Vector:
        u = self.window.get(index)
        if u is None:
            raise KeyError(f'Lanczos vector {index} is not in the window')
        return u

    def position(self, index: int) -> int:
        return self.positions[index]

    def _install(self, index: int, vector: Vector) -> None:
        if index not in self.positions:
            self._assign_position(index)
        self.window.push(index, vector)
        for r in self.pool:
            r -= (vector @ r) * vector
            norm = np.linalg.norm(r)
            if norm > 0.0:
                r /= norm

    def _assign_position(self, index: int) -> None:
        self.positions[index] = self.next_position
        self.next_position += 1

    def prefetch_block(self) -> None:
        """Apply the operator to every live vector of the current block."""
        j0 = self.j - self.j % self.p
        alive = [i for i in range(j0, j0 + self.p) if self._alive(i)]
        if len(alive) >= 2:
            block = np.asfortranarray(np.column_stack([self.vector(i) for i in alive]))
            W = self.op.apply_block(block)
            self._W = {i: W[:, k] for k, i in enumerate(alive)}
        else:
            self._W = {i: self.op.apply_one(self.vector(i)) for i in alive}
        self._cached_block = j0 // self.p

    def _skip_retired(self) -> None:
        while self.is_retired(self.j) and not self.exhausted:
            self.cache.push(np.zeros(self.p))
            self.j += 1

    def step(self) -> tuple[HessenbergColumn, BreakdownEvent | None]:
        """Run one Lanczos step and return column ``j`` of the Hessenberg matrix."""
        if self.pending_replacement is not None:
            raise RuntimeError('replace_dependent() must run before the next step')
        self._skip_retired()
        if self.exhausted:
            raise RuntimeError('banded Lanczos process is exhausted')

        j, p = self.j, self.p
        self.window.drop_expired(j)
        if j // p != self._cached_block:
            self.prefetch_block()
        w = self._W.pop(j).copy()

        rows: list[int] = []
        values: list[float] = []

        # symmetric coefficients from cached subdiagonals, no inner products
        for ell, h in enumerate(self.cache.superdiagonal()):
            i = j - p + ell
            if not self._alive(i):
                continue
            w -= h * self.vector(i)
            rows.append(i)
            values.append(float(h))

        explicit: dict[int, float] = {}
        for i in range(j, j + p):
            if not self._alive(i):
                continue
            u = self.vector(i)
            h = float(u @ w)
            w -= h * u
            explicit[i] = h

        if self.config.reorthogonalize:
            for i in range(j - p, j + p):
                if not self._alive(i):
                    continue
                u = self.vector(i)
                c = float(u @ w)
                w -= c * u
                if i >= j:
                    explicit[i] += c

        for r in self.window.retained:
            w -= (r.vector @ w) * r.vector

        h_next = float(np.linalg.norm(w))
        candidate = j + p
        self.steps += 1
        event = None
        subdiagonal = np.array(
            [explicit.get(i, 0.0) for i in range(j + 1, j + p)] + [h_next],
        )

        if h_next >= self.gamma:
            self._install(candidate, w / h_next)
        else:
            event = self._breakdown(j, candidate, w, h_next)
            subdiagonal[-1] = 0.0

        rows.extend(explicit)
        values.extend(explicit.values())
        if event is None or event.policy_applied is PolicyApplied.RANDOM_REPLACEMENT:
            rows.append(candidate)
            values.append(float(subdiagonal[-1]))

        self.cache.push(subdiagonal)
        column = HessenbergColumn(
            index=j,
            position=self.positions[j],
            rows=np.array(rows, dtype=np.int64),
            positions=np.array([self.positions[i] for i in rows], dtype=np.int64),
            values=np.array(values),
            subdiag_norm=float(subdiagonal[-1]),
        )

        self.j += 1
        self.window.evict_before(self.j - p)
        for stale in [i for i in self.positions if i < self.j - p]:
            del self.positions[stale]
        self.last_event = event
        self._skip_retired()
        return column, event

    def _breakdown(
        self,
        j: int,
        candidate: int,
        w: Vector,
        h: float,
    ) -> BreakdownEvent:
        kind = BreakdownKind.EXACT if h <= self.exact_threshold else BreakdownKind.NEAR
        if kind is BreakdownKind.NEAR:
            self.retain(candidate, w, j)

        if self.config.policy is BreakdownPolicy.REPLACE:
            policy = PolicyApplied.RANDOM_REPLACEMENT
            self._assign_position(candidate)
            self.pending_replacement = candidate
        else:
            policy = PolicyApplied.BLOCK_SHRINK
            self.shrink(candidate)

        event = BreakdownEvent(
            iteration=self.steps,
            index=j,
            kind=kind,
            h_value=h,
            policy_applied=policy,
        )
        logger.info(
            'breakdown at iteration %d (column %d): %s dependence, h=%.3e < gamma=%.3e, %s',
            event.iteration,
            j,
            kind.value,
            h,
            self.gamma,
            policy.value,
        )
        return event

    def retain(self, index: int, w: Vector, j: int) -> None:
        """Keep a near-dependent candidate for orthogonalization until ``j + 2p``."""
        r = _project_out(w.copy(), self.window.basis())
        norm = float(np.linalg.norm(r))
        if norm == 0.0:
            return
        self.window.retain(index, r / norm, j + 2 * self.p)

    def shrink(self, candidate: int) -> None:
        """Retire ``candidate`` and every later index in its lane."""
        self.retired_from[candidate % self.p] = candidate
        logger.info(
            'block size reduced to %d after retiring index %d',
            self.effective_block_size,
            candidate,
        )

    def replace_dependent(self) -> Vector:
        """Install a random orthonormal vector in place of the dependent candidate.

        The projection of the unit random vector, scaled by the operator norm
        estimate, must reach gamma or :class:`ReplacementExhausted` is raised.
        """
        index = self.pending_replacement
        if index is None:
            raise RuntimeError('no dependent vector awaiting replacement')

        if self.pool:
            r = self.pool.pop(0)
        else:
            logger.warning(
                'replacement pool empty at index %d; drawing a vector orthogonal '
                'to the window only',
                index,
            )
            r = self._rng.standard_normal(self.n)
            r /= np.linalg.norm(r)

        r = _project_out(r, self.window.basis())
        norm = float(np.linalg.norm(r))
        if norm == 0.0 or norm * self.norm_estimate < self.gamma:
            raise ReplacementExhausted(
                f'random replacement for index {index} is dependent on the '
                f'current basis (norm {norm:.3e})',
            )
        r /= norm
        self.pending_replacement = None
        self._install(index, r)
        logger.debug('installed random replacement as index %d', index)
        return r
