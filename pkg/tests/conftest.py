import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from banded_minres.linops import CsrSymmetricMatrix


@pytest.fixture(scope='session')
def banded_minres():
    def inner(*args: str, **kwargs):
        cmd = [sys.executable, '-m', 'banded_minres.cli']
        cmd.extend(args)

        kwargs['capture_output'] = True
        kwargs['text'] = True

        return subprocess.run(
            cmd,
            **kwargs,
        )

    return inner


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def indefinite_matrix(n: int, seed: int = 0) -> np.ndarray:
    """Dense symmetric matrix with eigenvalues in [-3, -0.5] and [0.5, 3]."""
    gen = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(gen.standard_normal((n, n)))
    magnitudes = gen.uniform(0.5, 3.0, n)
    signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    A = (Q * (signs * magnitudes)) @ Q.T
    return (A + A.T) / 2


@pytest.fixture
def indefinite():
    def inner(n: int = 60, seed: int = 0) -> CsrSymmetricMatrix:
        return CsrSymmetricMatrix.from_dense(indefinite_matrix(n, seed))

    return inner


@pytest.fixture
def sparse_indefinite():
    def inner(n: int = 60, seed: int = 0, density: float = 0.1) -> CsrSymmetricMatrix:
        gen = np.random.default_rng(seed)
        M = sp.random(n, n, density=density / 2, random_state=gen)
        signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        diagonal = sp.diags(signs * gen.uniform(1.0, 2.0, n))
        return CsrSymmetricMatrix.from_scipy(M + M.T + diagonal)

    return inner


class CountingOperator:
    """Wraps an operator and counts block and single applications."""

    def __init__(self, op) -> None:
        self.op = op
        self.block_calls = 0
        self.one_calls = 0

    @property
    def dim(self) -> int:
        return self.op.dim

    def apply_one(self, x):
        self.one_calls += 1
        return self.op.apply_one(x)

    def apply_block(self, X):
        self.block_calls += 1
        return self.op.apply_block(X)


@pytest.fixture
def counting():
    return CountingOperator
