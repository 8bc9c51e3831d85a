"""Shifted 2D Laplacian test problems and eigenvector-mixed right-hand sides.

``L = h^{-2} (I (x) T + T (x) I)`` with ``T = tridiag(1, -2, 1)`` of order
``g`` and ``h = 1 / (g - 1)``; the operator solved is ``A = -L - sigma I``.
Eigenpairs are analytic: products of discrete sines.
"""

from __future__ import annotations

import logging

from dataclasses import dataclass
from enum import Enum
from typing import Literal

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from .exceptions import ConfigError, DimensionMismatch
from .linops import CsrSymmetricMatrix, Vector

logger = logging.getLogger(__name__)

SMALL_GROUP = 100
LARGE_GROUP = 200


@dataclass(frozen=True)
class Laplacian2dSpec:
    grid: int = 200
    shift: float = 200.0

    def __post_init__(self) -> None:
        if self.grid < 2:
            raise ConfigError(f'grid side must be at least 2, got {self.grid}')

    @property
    def h(self) -> float:
        return 1.0 / (self.grid - 1)

    @property
    def n(self) -> int:
        return self.grid * self.grid


def build_laplacian_2d(spec: Laplacian2dSpec) -> CsrSymmetricMatrix:
    """The unshifted, negative definite ``L``."""
    g = spec.grid
    T = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(g, g), format='csr')
    identity = sp.identity(g, format='csr')
    L = (sp.kron(identity, T) + sp.kron(T, identity)) / spec.h**2
    return CsrSymmetricMatrix.from_scipy(L.tocsr(), check_symmetry=False)


def build_shifted_laplacian(spec: Laplacian2dSpec) -> CsrSymmetricMatrix:
    """``A = -L - sigma I``, indefinite for the default grid and shift."""
    return build_laplacian_2d(spec).scaled(-1.0).shifted(spec.shift)


@dataclass(frozen=True, eq=False)
class Eigenpairs:
    """Analytic eigenpairs ordered by ``|eigenvalue of A|``, ascending.

    ``modes[k] = (a, b)`` are the 1-based sine frequencies of column ``k``.
    """

    modes: npt.NDArray[np.int64]
    laplacian_values: Vector
    shifted_values: Vector
    vectors: npt.NDArray[np.float64]

    def __len__(self) -> int:
        return int(self.shifted_values.shape[0])

    def __iter__(self):
        for k in range(len(self)):
            yield float(self.shifted_values[k]), self.vectors[:, k]


def _sine_basis(g: int) -> npt.NDArray[np.float64]:
    k = np.arange(1, g + 1)
    return np.sqrt(2.0 / (g + 1)) * np.sin(np.outer(k, k) * np.pi / (g + 1))


def laplacian_spectrum(spec: Laplacian2dSpec) -> tuple[npt.NDArray[np.int64], Vector]:
    """All ``(a, b)`` modes sorted by ``|-lambda - sigma|`` and the matching ``lambda``."""
    g = spec.grid
    k = np.arange(1, g + 1)
    mu = 2.0 * np.cos(k * np.pi / (g + 1)) - 2.0
    a, b = np.meshgrid(k, k, indexing='ij')
    a, b = a.ravel(), b.ravel()
    values = (mu[a - 1] + mu[b - 1]) / spec.h**2
    order = np.lexsort((b, a, np.abs(-values - spec.shift)))
    return np.column_stack([a[order], b[order]]), values[order]


def laplacian_eigenpairs(
    spec: Laplacian2dSpec,
    count: int,
    which: Literal['smallest', 'largest'] = 'smallest',
) -> Eigenpairs:
    """The ``count`` eigenpairs of ``A`` with smallest or largest magnitude.

    Both selections come back in ascending order of magnitude, so the
    ``largest`` block ends with the dominant eigenvector.
    """
    if not 0 <= count <= spec.n:
        raise DimensionMismatch(f'cannot take {count} eigenpairs of an order-{spec.n} matrix')
    if which not in ('smallest', 'largest'):
        raise ValueError(f'which must be smallest or largest, got {which!r}')

    modes, values = laplacian_spectrum(spec)
    chosen = slice(0, count) if which == 'smallest' else slice(spec.n - count, spec.n)
    modes, values = modes[chosen], values[chosen]

    S = _sine_basis(spec.grid)
    vectors = np.empty((spec.n, count), order='F')
    for col, (a, b) in enumerate(modes):
        vectors[:, col] = np.kron(S[a - 1], S[b - 1])
    return Eigenpairs(
        modes=modes,
        laplacian_values=values,
        shifted_values=-values - spec.shift,
        vectors=vectors,
    )


class EigmixMode(Enum):
    SMALL_SMALL = 'small-small'
    SMALL_LARGE = 'small-large'


@dataclass(frozen=True)
class EigmixSpec:
    m: int
    mode: EigmixMode = EigmixMode.SMALL_SMALL
    trials: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        limit = SMALL_GROUP if self.mode is EigmixMode.SMALL_SMALL else LARGE_GROUP
        if not 0 <= self.m <= limit:
            raise ConfigError(f'{self.mode.value} overlap m must lie in [0, {limit}], got {self.m}')
        if self.trials < 1:
            raise ConfigError(f'trials must be positive, got {self.trials}')


def build_eigmix_rhs(
    spec: EigmixSpec,
    small: Eigenpairs,
    large: Eigenpairs | None = None,
    trial: int = 0,
) -> tuple[Vector, Vector]:
    """Two right-hand sides sharing ``2m`` eigencomponents.

    ``small`` holds the 200 smallest-magnitude eigenvectors; ``large`` the 200
    largest, needed for :attr:`EigmixMode.SMALL_LARGE`. Coefficients are
    uniform on ``[0, 1)`` from a generator seeded with ``seed + trial``.
    """
    m = spec.m
    Q = small.vectors
    if Q.shape[1] < 2 * SMALL_GROUP:
        raise DimensionMismatch(f'need {2 * SMALL_GROUP} small eigenpairs, got {Q.shape[1]}')
    rng = np.random.default_rng(spec.seed + trial)

    if spec.mode is EigmixMode.SMALL_SMALL:
        b1 = Q[:, : SMALL_GROUP + m] @ rng.random(SMALL_GROUP + m)
        b2 = Q[:, SMALL_GROUP - m : 2 * SMALL_GROUP] @ rng.random(SMALL_GROUP + m)
        return b1, b2

    if large is None or large.vectors.shape[1] < LARGE_GROUP:
        raise DimensionMismatch(f'need {LARGE_GROUP} large eigenpairs for {spec.mode.value}')
    QL = large.vectors[:, -LARGE_GROUP:]
    b1 = Q[:, :LARGE_GROUP] @ rng.random(LARGE_GROUP) + QL[:, :m] @ rng.random(m)
    b2 = Q[:, LARGE_GROUP - m : LARGE_GROUP] @ rng.random(m) + QL @ rng.random(LARGE_GROUP)
    return b1, b2
