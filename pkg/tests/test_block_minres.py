import math
import warnings

import numpy as np
import pytest

from banded_minres.banded_lanczos import PolicyApplied
from banded_minres.block_minres import BlockMinres, minres_single, solve
from banded_minres.config import SolverConfig
from banded_minres.exceptions import ConfigError, DimensionMismatch, MaxIterReached
from banded_minres.history import RunStatus
from banded_minres.linops import CsrSymmetricMatrix


def krylov_oracle(A: np.ndarray, B: np.ndarray, k: int) -> np.ndarray:
    """Minimal residual norms of each column over the first k block Krylov vectors."""
    p = B.shape[1]
    basis: list[np.ndarray] = []
    for idx in range(k):
        v = B[:, idx].copy() if idx < p else A @ basis[idx - p]
        for _ in range(2):
            for u in basis:
                v -= (u @ v) * u
        basis.append(v / np.linalg.norm(v))
    V = np.column_stack(basis)
    AV = A @ V
    residuals = []
    for i in range(p):
        y, *_ = np.linalg.lstsq(AV, B[:, i], rcond=None)
        residuals.append(np.linalg.norm(B[:, i] - AV @ y))
    return np.array(residuals)


def rotate(rotation: tuple[float, float], a: float, d: float) -> tuple[float, float]:
    c, s = rotation
    return c * a + s * d, -s * a + c * d


def textbook_minres(A: np.ndarray, b: np.ndarray, k: int) -> list[float]:
    """Residual norms of k steps of Lanczos plus Givens rotations."""
    n = b.shape[0]
    beta = np.linalg.norm(b)
    V = [np.zeros(n), b / beta]
    betas = [beta]
    rotations: list[tuple[float, float]] = []
    g = beta
    residuals = []
    for j in range(k):
        w = A @ V[-1] - (betas[-1] if j > 0 else 0.0) * V[-2]
        alpha = V[-1] @ w
        w -= alpha * V[-1]
        for u in V[1:]:
            w -= (u @ w) * u
        beta_next = np.linalg.norm(w)

        # column j of T in rows j-2 .. j+1
        col = [0.0, betas[-1] if j > 0 else 0.0, alpha, beta_next]
        if j >= 2:
            col[0], col[1] = rotate(rotations[j - 2], col[0], col[1])
        if j >= 1:
            col[1], col[2] = rotate(rotations[j - 1], col[1], col[2])
        r = math.hypot(col[2], col[3])
        rotations.append((col[2] / r, col[3] / r))
        g = -rotations[-1][1] * g
        residuals.append(abs(g))

        V.append(w / beta_next)
        betas.append(beta_next)
    return residuals


@pytest.fixture
def system(indefinite, rng):
    A = indefinite(60)
    return A, A.toarray(), rng.standard_normal((60, 3))


@pytest.mark.parametrize('p', [1, 2, 3, 5])
@pytest.mark.parametrize('seed', range(20))
def test_matches_block_krylov_oracle_every_iteration(p, seed, sparse_indefinite):
    A = sparse_indefinite(60, seed, density=0.1)
    dense = A.toarray()
    B = np.random.default_rng(100 + seed).standard_normal((60, p))
    b_norms = np.linalg.norm(B, axis=0)
    _, history = solve(A, B, config=SolverConfig(tol=0.0, max_iter=25))
    for k in range(1, 26):
        expected = krylov_oracle(dense, B, k)
        np.testing.assert_allclose(history.computed[k] * b_norms, expected, atol=1e-8 * b_norms.max())


@pytest.mark.parametrize('k', [1, 4, 9, 15])
def test_solution_attains_oracle_residual(system, k):
    A, dense, B = system
    X, history = solve(A, B, config=SolverConfig(tol=0.0, max_iter=k))
    assert history.iterations == k
    expected = krylov_oracle(dense, B, k)
    b_norms = np.linalg.norm(B, axis=0)
    true = np.linalg.norm(B - dense @ X, axis=0)
    np.testing.assert_allclose(true, expected, atol=1e-8 * b_norms.max())


@pytest.mark.parametrize('seed', range(10))
def test_single_column_matches_textbook_minres(seed, indefinite):
    A = indefinite(100, seed)
    b = np.random.default_rng(200 + seed).standard_normal(100)
    config = SolverConfig(tol=0.0, max_iter=20)
    x, history = minres_single(A, b, config=config)
    expected = textbook_minres(A.toarray(), b, 20)
    computed = history.column(0)[1:] * np.linalg.norm(b)
    np.testing.assert_allclose(computed, expected, rtol=1e-10, atol=1e-10 * np.linalg.norm(b))

    # the single-vector entry point is the block code at p = 1, bit for bit
    X, block = solve(A, b[:, None], config=config)
    assert np.array_equal(history.as_array(), block.as_array())
    assert np.array_equal(x, X[:, 0])


def test_block_never_worse_than_sequential(system):
    A, _, B = system
    p = B.shape[1]
    config = SolverConfig(tol=0.0, max_iter=12)
    _, block = solve(A, B, config=config)
    sequential = [minres_single(A, B[:, i], config=config)[1] for i in range(p)]
    block_history = block.as_array()
    for j in range(1, 13):
        for i in range(p):
            d = j // p + (1 if i < j % p else 0)
            assert block_history[j, i] <= sequential[i].as_array()[d, 0] + 1e-10


def test_residuals_are_nonincreasing(system):
    A, _, B = system
    _, history = solve(A, B, config=SolverConfig(tol=0.0, max_iter=30))
    residuals = history.as_array()
    assert np.all(np.diff(residuals, axis=0) <= 1e-12)
    np.testing.assert_allclose(residuals[0], 1.0)


def test_converges(indefinite, rng):
    A = indefinite(200, seed=5)
    B = rng.standard_normal((200, 2))
    X, history = solve(A, B)
    assert history.status is RunStatus.CONVERGED
    assert np.all(history.final <= 1e-8)
    true = np.linalg.norm(B - A.toarray() @ X, axis=0) / np.linalg.norm(B, axis=0)
    assert np.all(true <= 1e-7)
    assert all(at is not None for at in history.converged_at)


def test_one_block_apply_per_p_steps(indefinite, rng, counting):
    op = counting(indefinite(60))
    solve(op, rng.standard_normal((60, 3)), config=SolverConfig(tol=0.0, max_iter=9))
    assert op.block_calls == math.ceil(9 / 3)
    assert op.one_calls == SolverConfig().norm_iterations


def block_grade_problem(rng):
    A = CsrSymmetricMatrix.from_dense(np.diag(np.resize([-2.0, -1.0, 1.0, 3.0], 50)))
    return A, rng.standard_normal((50, 2))


@pytest.mark.parametrize('policy', ['replace', 'shrink'])
def test_breakdown_when_block_krylov_space_is_invariant(policy, rng):
    A, B = block_grade_problem(rng)
    X, history = solve(A, B, config=SolverConfig(policy=policy))
    assert history.events[0].iteration == 7
    assert history.status is RunStatus.CONVERGED
    assert history.iterations == 8
    assert np.all(history.computed[8] <= 1e-10)
    np.testing.assert_allclose(A.toarray() @ X, B, atol=1e-9)


def test_dependent_right_hand_sides_converge(rng):
    A = CsrSymmetricMatrix.from_dense(np.diag(np.resize(np.linspace(-2.0, 3.0, 10), 100)))
    b1 = rng.standard_normal(100)
    B = np.column_stack([b1, A.apply_one(b1)])
    X, history = solve(A, B)
    assert history.events[0].iteration == 1
    assert history.status is RunStatus.CONVERGED
    np.testing.assert_allclose(A.toarray() @ X, B, atol=1e-6)


def test_max_iter_warning(system):
    A, _, B = system
    with pytest.warns(MaxIterReached):
        _, history = solve(A, B, config=SolverConfig(max_iter=3))
    assert history.status is RunStatus.MAX_ITER
    assert history.iterations == 3


def test_zero_tolerance_runs_exactly_max_iter(system):
    A, _, B = system
    with warnings.catch_warnings():
        warnings.simplefilter('error', MaxIterReached)
        _, history = solve(A, B, config=SolverConfig(tol=0.0, max_iter=5))
    assert history.iterations == 5
    assert history.status is RunStatus.MAX_ITER
    assert not history.converged.any()


def test_augmented_columns_are_dropped(system):
    A, _, B = system
    X, history = solve(A, B[:, :2], config=SolverConfig(tol=0.0, max_iter=6), augment=2)
    assert X.shape == (60, 2)
    assert history.augmented == 2
    assert history.as_array().shape == (7, 4)


def test_augmented_search_space_is_larger(system):
    A, _, B = system
    config = SolverConfig(tol=0.0, max_iter=8)
    _, plain = solve(A, B[:, :1], config=config)
    _, augmented = solve(A, B[:, :1], config=config, augment=1)
    # eight steps with p=2 span the four-step single space
    assert augmented.computed[8][0] <= plain.computed[4][0] + 1e-12


def test_initial_guess(system, rng):
    A, dense, B = system
    X0 = rng.standard_normal(B.shape)
    X, history = solve(A, B, X0=X0, config=SolverConfig(tol=0.0, max_iter=10))
    start = np.linalg.norm(B - dense @ X0, axis=0) / np.linalg.norm(B, axis=0)
    np.testing.assert_allclose(history.computed[0], start, rtol=1e-12)
    true = np.linalg.norm(B - dense @ X, axis=0) / np.linalg.norm(B, axis=0)
    np.testing.assert_allclose(history.final, true, rtol=1e-6, atol=1e-12)


def test_true_residual_audit(system):
    A, _, B = system
    _, history = solve(
        A,
        B,
        config=SolverConfig(tol=0.0, max_iter=10, true_residual_check_every=4),
    )
    assert sorted(history.true) == [4, 8]
    for iteration, true in history.true.items():
        np.testing.assert_allclose(true, history.computed[iteration], rtol=1e-8, atol=1e-12)


def test_energy_is_conserved(system):
    A, _, B = system
    solver = BlockMinres(A, B, config=SolverConfig(tol=0.0, max_iter=20))
    for _ in range(20):
        solver.iterate()
    assert solver.qr.energy_defect() < 1e-12


def trace_factorization(solver: BlockMinres, steps: int):
    """Iterate and assemble H-bar, R, the search directions M and the basis U by position."""
    columns, r_columns, directions, vectors = [], [], [], []
    for _ in range(steps):
        column = solver.iterate()
        columns.append(column)
        r_columns.append(solver.qr.r_columns[-1])
        directions.append(solver.directions.directions[-1][1])
        vectors.append(solver.lanczos.vector(column.index).copy())

    H = np.zeros((solver.lanczos.last_position + 1, steps))
    R = np.zeros((steps, steps))
    for c, (column, r_column) in enumerate(zip(columns, r_columns, strict=True)):
        assert column.position == r_column.position == c
        H[column.positions, c] = column.values
        R[r_column.start : c + 1, c] = r_column.values
    return columns, r_columns, H, R, np.column_stack(directions), np.column_stack(vectors)


def entries(column) -> dict[int, float]:
    return dict(zip(column.rows.tolist(), column.values.tolist(), strict=True))


@pytest.mark.parametrize('p', [1, 2, 3])
def test_banded_r_matches_dense_qr(p, indefinite, rng):
    A = indefinite(30)
    solver = BlockMinres(A, rng.standard_normal((30, p)), config=SolverConfig(tol=0.0, max_iter=12))
    _, r_columns, H, R, M, U = trace_factorization(solver, 12)

    dense_R = np.linalg.qr(H, mode='r')
    # equal up to the sign of each row
    np.testing.assert_allclose(np.abs(R), np.abs(dense_R), atol=1e-10)
    np.testing.assert_allclose(R.T @ R, H.T @ H, atol=1e-10)

    assert all(r.position - r.start <= 2 * p for r in r_columns)
    assert np.abs(np.triu(dense_R, 2 * p + 1)).max(initial=0.0) <= 1e-10

    np.testing.assert_allclose(M @ R, U, atol=1e-10)


def test_replacement_leaves_structural_zeros(indefinite, rng):
    A = indefinite(40)
    b1 = rng.standard_normal(40)
    B = np.column_stack([b1, A.apply_one(A.apply_one(b1))])
    solver = BlockMinres(A, B, config=SolverConfig(tol=0.0, max_iter=8))
    columns, r_columns, H, R, M, U = trace_factorization(solver, 8)

    event = solver.history.events[0]
    assert event.index == 2
    assert event.policy_applied is PolicyApplied.RANDOM_REPLACEMENT

    # u_4 replaced the dependent candidate of column 2
    assert entries(columns[2])[4] == 0.0
    assert entries(columns[4])[2] == 0.0
    assert H[4, 2] == 0.0
    # the reflector of column 0 meets only zeros in column 4
    assert r_columns[4].start == 0
    assert r_columns[4].value_at(0) == 0.0

    dense_R = np.linalg.qr(H, mode='r')
    np.testing.assert_allclose(np.abs(R), np.abs(dense_R), atol=1e-10)
    np.testing.assert_allclose(M @ R, U, atol=1e-10)


def test_shape_errors(system):
    A, _, B = system
    with pytest.raises(DimensionMismatch):
        solve(A, B[:10])
    with pytest.raises(DimensionMismatch):
        solve(CsrSymmetricMatrix.from_dense(np.eye(2)), np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        solve(A, B, X0=np.zeros((60, 1)))
    with pytest.raises(DimensionMismatch):
        minres_single(A, B)
    with pytest.raises(DimensionMismatch):
        solve(A, B, augment=-1)


def test_single_vector_result_shape(system):
    A, _, B = system
    x, history = minres_single(A, B[:, 0], config=SolverConfig(tol=0.0, max_iter=3))
    assert x.shape == (60,)
    assert history.columns == 1


def test_gamma_must_be_below_operator_norm(system):
    A, _, B = system
    with pytest.raises(ConfigError, match='below the operator norm estimate'):
        solve(A, B, config=SolverConfig(gamma=1e9))
    _, history = solve(A, B, config=SolverConfig(gamma=1e-6, tol=0.0, max_iter=3))
    assert history.gamma == 1e-6
