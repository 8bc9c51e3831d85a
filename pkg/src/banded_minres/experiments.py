"""Reproductions of the shifted-Laplacian experiments.

Every experiment runs on ``A = -L - sigma I`` with split IC(0)
preconditioning built from ``-L`` unless ``precondition=False``. Block
iteration counts are Lanczos steps; sequential counts are the sum of
single right-hand-side MINRES runs on each column.
"""

from __future__ import annotations

import logging

from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from .block_minres import minres_single, solve
from .config import SolverConfig
from .exceptions import ConfigError
from .history import ConvergenceHistory, RunRecord, RunStatus
from .linops import BlockVector, CsrSymmetricMatrix, SymmetricOperator, as_block_vector
from .precond import SplitPreconditionedOperator, compose_split, ic0_factorize
from .problems import (
    LARGE_GROUP,
    SMALL_GROUP,
    EigmixMode,
    EigmixSpec,
    Laplacian2dSpec,
    build_eigmix_rhs,
    build_laplacian_2d,
    laplacian_eigenpairs,
)

logger = logging.getLogger(__name__)

FIG2_P_VALUES = tuple(range(1, 11))
FIG5_M_VALUES = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
FIG6_M_VALUES = (0, 25, 50, 75, 100, 125, 150, 175, 200)
DESK_EIGMIX_GRID = 50
DESK_EIGMIX_TRIALS = 5
EIGCOMPONENT_COUNT = 200


@dataclass(eq=False)
class Problem:
    spec: Laplacian2dSpec
    A: CsrSymmetricMatrix
    split: SplitPreconditionedOperator | None = None

    @property
    def operator(self) -> SymmetricOperator:
        return self.split if self.split is not None else self.A

    @property
    def n(self) -> int:
        return self.A.n

    def transform(self, B: Any) -> BlockVector:
        """Right-hand sides in the coordinates the solver iterates in."""
        if self.split is None:
            return as_block_vector(B, self.n)
        return self.split.rhs_transform(B)

    def recover(self, Y: Any) -> BlockVector:
        if self.split is None:
            return as_block_vector(Y, self.n)
        return self.split.solution_recover(Y)


def build_problem(spec: Laplacian2dSpec, precondition: bool = True) -> Problem:
    negative_laplacian = build_laplacian_2d(spec).scaled(-1.0)
    A = negative_laplacian.shifted(spec.shift)
    split = None
    if precondition:
        split = compose_split(A, ic0_factorize(negative_laplacian))
    return Problem(spec=spec, A=A, split=split)


@dataclass
class ExperimentResult:
    """Histories and/or a summary table produced by one experiment."""

    name: str
    records: list[RunRecord] = field(default_factory=list)
    fieldnames: list[str] = field(default_factory=list)
    rows: list[dict[str, Any]] = field(default_factory=list)
    meta: list[tuple[str, Any]] = field(default_factory=list)
    max_iter_runs: int = 0

    @property
    def hit_max_iter(self) -> bool:
        return self.max_iter_runs > 0 or any(
            r.history.status is RunStatus.MAX_ITER for r in self.records
        )

    @property
    def is_table(self) -> bool:
        return bool(self.fieldnames)


def run_sequential(
    op: SymmetricOperator,
    B: BlockVector,
    config: SolverConfig,
) -> list[ConvergenceHistory]:
    return [minres_single(op, B[:, i], config=config)[1] for i in range(B.shape[1])]


def _compare(
    name: str,
    op: SymmetricOperator,
    B: BlockVector,
    config: SolverConfig,
    labels: Sequence[str],
) -> ExperimentResult:
    _, block = solve(op, B, config=config)
    sequential = run_sequential(op, B, config)
    block_total = block.iterations
    sequential_total = sum(h.iterations for h in sequential)
    logger.info(
        '%s: block %d iterations, sequential %d iterations',
        name,
        block_total,
        sequential_total,
    )
    records = [RunRecord(f'{name}-block', block, {'rhs': '|'.join(labels)})]
    records.extend(
        RunRecord(f'{name}-seq-{i}', h, {'rhs': label})
        for i, (h, label) in enumerate(zip(sequential, labels, strict=True))
    )
    return ExperimentResult(
        name=name,
        records=records,
        meta=[
            (f'{name}.block_iterations', block_total),
            (f'{name}.sequential_iterations', sequential_total),
        ],
    )


def fig1(problem: Problem, config: SolverConfig, rhs_count: int = 10) -> ExperimentResult:
    """Ten random right-hand sides, block against sequential."""
    rng = np.random.default_rng(config.seed)
    B = problem.transform(rng.standard_normal((problem.n, rhs_count)))
    return _compare('fig1', problem.operator, B, config, [f'random:{i}' for i in range(rhs_count)])


def fig2(
    problem: Problem,
    config: SolverConfig,
    p_values: Iterable[int] = FIG2_P_VALUES,
) -> ExperimentResult:
    """Iteration ratio block/sequential for ``[1, e_1, .., e_{p-1}]``."""
    p_values = sorted(set(p_values))
    if not p_values or p_values[0] < 1:
        raise ConfigError(f'block sizes must be positive, got {p_values}')
    columns = [np.ones(problem.n)]
    for k in range(max(p_values) - 1):
        e = np.zeros(problem.n)
        e[k] = 1.0
        columns.append(e)
    B_all = problem.transform(np.column_stack(columns))
    sequential = run_sequential(problem.operator, B_all, config)

    result = ExperimentResult(
        name='fig2',
        fieldnames=['p', 'block_iterations', 'sequential_iterations', 'ratio'],
    )
    for p in p_values:
        _, block = solve(problem.operator, B_all[:, :p], config=config)
        sequential_total = sum(h.iterations for h in sequential[:p])
        result.records.append(RunRecord(f'fig2-p{p}', block))
        result.rows.append(
            {
                'p': p,
                'block_iterations': block.iterations,
                'sequential_iterations': sequential_total,
                'ratio': block.iterations / sequential_total,
            },
        )
    result.records.extend(RunRecord(f'fig2-seq-{i}', h) for i, h in enumerate(sequential))
    return result


def fig3(problem: Problem, config: SolverConfig) -> ExperimentResult:
    """``b_1 = e_1`` and ``b_2`` its image under the solved operator."""
    e1 = np.zeros(problem.n)
    e1[0] = 1.0
    b1 = problem.transform(e1)[:, 0]
    b2 = problem.operator.apply_one(b1)
    B = np.asfortranarray(np.column_stack([b1, b2]))
    return _compare('fig3', problem.operator, B, config, ['e:1', 'A*e:1'])


def fig4(
    problem: Problem,
    config: SolverConfig,
    variant: Literal['left', 'right'] = 'left',
) -> ExperimentResult:
    """``b_1 = e_1`` with ``b_2 = 1`` (left) or ``b_2 = e_2`` (right)."""
    B = np.zeros((problem.n, 2))
    B[0, 0] = 1.0
    if variant == 'left':
        B[:, 1] = 1.0
        labels = ['e:1', 'ones']
    elif variant == 'right':
        B[1, 1] = 1.0
        labels = ['e:1', 'e:2']
    else:
        raise ConfigError(f'unknown fig4 variant {variant!r}')
    result = _compare(f'fig4-{variant}', problem.operator, problem.transform(B), config, labels)
    result.name = 'fig4'
    return result


def eigcomponents(problem: Problem, count: int = EIGCOMPONENT_COUNT) -> ExperimentResult:
    """Magnitudes of ``e_1``, ``1`` and ``e_2`` along the smallest-magnitude eigenvectors."""
    count = min(count, problem.n)
    pairs = laplacian_eigenpairs(problem.spec, count)
    Q = pairs.vectors
    ones = np.ones(problem.n)
    result = ExperimentResult(
        name='eigcomponents',
        fieldnames=['index', 'eigenvalue', 'b1', 'b2', 'b2_hat'],
    )
    for k in range(count):
        result.rows.append(
            {
                'index': k + 1,
                'eigenvalue': float(pairs.shifted_values[k]),
                'b1': abs(float(Q[0, k])),
                'b2': abs(float(Q[:, k] @ ones)),
                'b2_hat': abs(float(Q[1, k])),
            },
        )
    return result


@dataclass(frozen=True)
class _Trial:
    m: int
    trial: int
    block_iterations: int
    sequential_iterations: int
    block_seconds: float
    sequential_seconds: float
    max_iter: bool


def eigmix(
    problem: Problem,
    config: SolverConfig,
    mode: EigmixMode,
    m_values: Iterable[int],
    trials: int,
    threads: int = 1,
    timing: bool = False,
) -> ExperimentResult:
    """Average block and sequential iterations over random eigenvector mixes."""
    m_values = list(m_values)
    for m in m_values:
        EigmixSpec(m=m, mode=mode, trials=trials, seed=config.seed)

    small = laplacian_eigenpairs(problem.spec, 2 * SMALL_GROUP)
    large = None
    if mode is EigmixMode.SMALL_LARGE:
        large = laplacian_eigenpairs(problem.spec, LARGE_GROUP, 'largest')

    def run_trial(task: tuple[int, int]) -> _Trial:
        m, trial = task
        spec = EigmixSpec(m=m, mode=mode, trials=trials, seed=config.seed)
        b1, b2 = build_eigmix_rhs(spec, small, large, trial)
        B = problem.transform(np.column_stack([b1, b2]))
        _, block = solve(problem.operator, B, config=config)
        sequential = run_sequential(problem.operator, B, config)
        return _Trial(
            m=m,
            trial=trial,
            block_iterations=block.iterations,
            sequential_iterations=sum(h.iterations for h in sequential),
            block_seconds=block.wall_time,
            sequential_seconds=sum(h.wall_time for h in sequential),
            max_iter=config.tol > 0.0
            and any(h.status is RunStatus.MAX_ITER for h in [block, *sequential]),
        )

    tasks = [(m, trial) for m in m_values for trial in range(trials)]
    outcomes = _map_trials(run_trial, tasks, threads)

    name = 'fig5' if mode is EigmixMode.SMALL_SMALL else 'fig6'
    fieldnames = ['m', 'trials', 'mean_block_iterations', 'mean_sequential_iterations', 'ratio']
    if timing:
        fieldnames += ['mean_block_seconds', 'mean_sequential_seconds']
    result = ExperimentResult(
        name=name,
        fieldnames=fieldnames,
        max_iter_runs=sum(o.max_iter for o in outcomes),
    )
    result.meta = [
        (f'{name}.mode', mode.value),
        (f'{name}.grid', problem.spec.grid),
        (f'{name}.seed', config.seed),
        (f'{name}.max_iter_trials', sum(o.max_iter for o in outcomes)),
    ]
    for m in m_values:
        group = [o for o in outcomes if o.m == m]
        block_mean = float(np.mean([o.block_iterations for o in group]))
        sequential_mean = float(np.mean([o.sequential_iterations for o in group]))
        row: dict[str, Any] = {
            'm': m,
            'trials': len(group),
            'mean_block_iterations': block_mean,
            'mean_sequential_iterations': sequential_mean,
            'ratio': block_mean / sequential_mean,
        }
        if timing:
            row['mean_block_seconds'] = float(np.mean([o.block_seconds for o in group]))
            row['mean_sequential_seconds'] = float(np.mean([o.sequential_seconds for o in group]))
        result.rows.append(row)
    return result


def _map_trials(
    fn: Callable[[tuple[int, int]], _Trial],
    tasks: list[tuple[int, int]],
    threads: int,
) -> list[_Trial]:
    if threads <= 1:
        return [fn(task) for task in tasks]
    logger.debug('running %d trials on %d threads', len(tasks), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))
