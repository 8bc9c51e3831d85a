import argparse
import logging
import sys
import warnings

from collections.abc import Sequence
from pathlib import Path
from typing import Any, ClassVar, NoReturn, Protocol

import numpy as np

from . import experiments
from .block_minres import solve
from .config import BreakdownPolicy, ProjectConfig, SolverConfig
from .exceptions import BandedMinresError, ConfigError, DimensionMismatch, MaxIterReached
from .history import RunRecord, RunStatus, write_history_csv, write_table_csv
from .linops import BlockVector, SymmetricOperator
from .matrix_market import mm_read
from .precond import compose_split, ic0_factorize
from .problems import EigmixMode, Laplacian2dSpec, build_laplacian_2d

LOG_FORMAT = '%(levelname)s %(name)s: %(message)s'


def printe(*args, **kwargs) -> None:
    print(*args, file=sys.stderr, **kwargs)  # noqa: T201


class Command(Protocol):
    help: ClassVar[str] = ''

    @property
    def name(self) -> str:
        return self.__class__.__name__.lower()

    def set_args(self, parser: argparse.ArgumentParser) -> None:
        pass

    def process_args(
        self,
        parser: argparse.ArgumentParser,
        args: argparse.Namespace,
    ) -> None:
        pass

    def __call__(self, args: argparse.Namespace) -> int:
        raise NotImplementedError


class CLI:
    def __init__(
        self,
        *commands: Command,
        prog: str | None = None,
        description: str | None = None,
    ) -> None:
        self.parser = argparse.ArgumentParser(
            prog=prog,
            description=description,
            formatter_class=argparse.RawTextHelpFormatter,
        )
        self.parser.add_argument(
            '-v',
            '--verbose',
            action='count',
            default=0,
            help='Increase log output (-v info, -vv debug)',
        )
        self._subparsers = self.parser.add_subparsers(
            title='commands',
            dest='command',
        )
        self._subparsers.metavar = '[command]'

        for command in commands:
            self.add_command(command)

    def add_command(self, command: Command) -> None:
        parser = self._subparsers.add_parser(
            command.name,
            help=getattr(command, 'help', None),
            aliases=getattr(command, 'aliases', []),
        )
        command.set_args(parser)
        parser.set_defaults(_cmd=command, _parser=parser)

    def _process_args(
        self,
        argv: Sequence[str] | None = None,
    ) -> argparse.Namespace:
        args: argparse.Namespace = self.parser.parse_args(argv)

        if args.command is None:
            printe('error: command required')
            self.parser.print_help()
            sys.exit(2)

        level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
        logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)

        args._cmd.process_args(args._parser, args)
        return args

    def __call__(self, argv: Sequence[str] | None = None) -> NoReturn:
        args = self._process_args(argv)
        sys.exit(args._cmd(args))


def usage_error(parser: argparse.ArgumentParser, message: str) -> NoReturn:
    parser.print_usage(sys.stderr)
    printe(f'error: {message}')
    sys.exit(1)


def add_solver_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('solver')
    group.add_argument('--tol', type=float, default=None, help='Relative residual target per column (default: 1e-8)')
    group.add_argument('--maxit', type=int, default=None, help='Iteration cap (default: 1000)')
    group.add_argument(
        '--gamma',
        type=float,
        default=None,
        help='Dependence tolerance (default: 1e-8 times the estimated operator norm)',
    )
    group.add_argument(
        '--policy',
        choices=[p.value for p in BreakdownPolicy],
        default=None,
        help='How dependent basis vectors are handled (default: replace)',
    )
    group.add_argument('--seed', type=int, default=None, help='Random seed (default: 0)')
    group.add_argument(
        '--config-file',
        default=None,
        type=Path,
        help=(
            'Path to config file (default: searches for .banded-minres.toml '
            'or pyproject.toml with [tool.banded-minres] section)'
        ),
    )

    output = parser.add_argument_group('output')
    output.add_argument('--out', default='-', help='CSV destination (default: stdout)')
    output.add_argument(
        '--timing',
        action='store_true',
        help='Include wall-clock seconds (output is then no longer reproducible)',
    )


def load_config(args: argparse.Namespace) -> tuple[SolverConfig, ProjectConfig]:
    if args.config_file is None:
        project = ProjectConfig.discover()
    else:
        project = ProjectConfig.from_file(args.config_file)
    solver = project.solver.merged(
        tol=args.tol,
        max_iter=args.maxit,
        gamma=args.gamma,
        policy=args.policy,
        seed=args.seed,
        true_residual_check_every=getattr(args, 'true_residual_every', None),
    )
    return solver, project


def parse_rhs(spec: str, n: int, rng: np.random.Generator) -> BlockVector:
    """Columns for one ``--rhs`` value: ``ones``, ``random:k``, ``e:i`` or a file."""
    kind, _, arg = spec.partition(':')
    if spec == 'ones':
        return np.ones((n, 1))
    if kind == 'random' and arg:
        try:
            k = int(arg)
        except ValueError as e:
            raise ConfigError(f'bad --rhs {spec!r}: k must be an integer') from e
        return rng.standard_normal((n, k))
    if kind == 'e' and arg:
        try:
            i = int(arg)
        except ValueError as e:
            raise ConfigError(f'bad --rhs {spec!r}: i must be an integer') from e
        if not 1 <= i <= n:
            raise DimensionMismatch(f'--rhs {spec}: index outside 1..{n}')
        e = np.zeros((n, 1))
        e[i - 1] = 1.0
        return e

    path = Path(spec)
    if not path.exists():
        raise ConfigError(f'--rhs {spec!r} is neither ones, random:k, e:i nor an existing file')
    try:
        data = np.loadtxt(path, ndmin=2)
    except ValueError as e:
        raise ConfigError(f'cannot read right-hand sides from {path}: {e}') from e
    if data.shape[0] != n and data.shape[1] == n:
        data = data.T
    if data.shape[0] != n:
        raise DimensionMismatch(f'{path} holds vectors of length {data.shape[0]}, matrix order is {n}')
    return data


def report_status(history: Any, label: str) -> None:
    if history.status is RunStatus.MAX_ITER and history.tol > 0:
        printe(
            f'✗ {label}: no convergence after {history.iterations} iterations '
            f'({int(history.converged.sum())} of {history.columns} columns converged)',
        )
    else:
        printe(f'✓ {label}: {history.status.value} after {history.iterations} iterations')


class Solve:
    help: ClassVar[str] = (
        'Solves a symmetric system with one or more right-hand sides '
        'by block MINRES and writes the residual history as CSV. '
        'The matrix comes from a Matrix Market file or is the shifted '
        '2D Laplacian -L - sigma*I on a g x g grid.'
    )
    name = 'solve'

    def set_args(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument('--matrix', type=Path, default=None, help='Matrix Market coordinate file')
        parser.add_argument(
            '--laplacian',
            nargs=2,
            type=float,
            default=None,
            metavar=('G', 'SIGMA'),
            help='Use the shifted 2D Laplacian on a G x G grid with shift SIGMA',
        )
        parser.add_argument(
            '--rhs',
            action='append',
            default=None,
            help='Right-hand side(s): ones, random:k, e:i (1-based) or a text file; repeatable',
        )
        parser.add_argument(
            '--rhs-apply-A',
            dest='rhs_apply_a',
            action='store_true',
            help='Append the operator applied to the last right-hand side',
        )
        parser.add_argument(
            '--precond',
            choices=['ic0', 'none'],
            default='none',
            help='Split IC(0) preconditioning (of -L for --laplacian, of the matrix otherwise)',
        )
        parser.add_argument(
            '--augment',
            type=int,
            default=0,
            help='Pad the block with this many random columns',
        )
        parser.add_argument(
            '--true-residual-every',
            type=int,
            default=None,
            help='Audit the true residual every k iterations',
        )
        parser.add_argument('--solution', type=Path, default=None, help='Write X as text to this path')
        add_solver_args(parser)

    def process_args(
        self,
        parser: argparse.ArgumentParser,
        args: argparse.Namespace,
    ) -> None:
        if (args.matrix is None) == (args.laplacian is None):
            usage_error(parser, 'exactly one of --matrix or --laplacian is required')
        if args.laplacian is not None and not float(args.laplacian[0]).is_integer():
            usage_error(parser, '--laplacian grid size must be an integer')

    def _operator(self, args: argparse.Namespace) -> tuple[SymmetricOperator, Any]:
        if args.matrix is not None:
            A = mm_read(args.matrix)
            factor_source = A
        else:
            spec = Laplacian2dSpec(grid=int(args.laplacian[0]), shift=args.laplacian[1])
            factor_source = build_laplacian_2d(spec).scaled(-1.0)
            A = factor_source.shifted(spec.shift)
        if args.precond == 'ic0':
            split = compose_split(A, ic0_factorize(factor_source))
            return split, split
        return A, None

    def __call__(self, args: argparse.Namespace) -> int:
        try:
            config, _ = load_config(args)
            op, split = self._operator(args)
            rng = np.random.default_rng(config.seed)
            columns = [parse_rhs(spec, op.dim, rng) for spec in (args.rhs or ['ones'])]
            B = np.asfortranarray(np.hstack(columns))
            if split is not None:
                B = split.rhs_transform(B)
            if args.rhs_apply_a:
                B = np.asfortranarray(np.column_stack([B, op.apply_one(B[:, -1])]))

            with warnings.catch_warnings():
                warnings.simplefilter('ignore', MaxIterReached)
                X, history = solve(op, B, config=config, augment=args.augment)
            if split is not None:
                X = split.solution_recover(X)

            record = RunRecord(
                'solve',
                history,
                {
                    'source': args.matrix if args.matrix is not None else 'laplacian',
                    'rhs': '|'.join(args.rhs or ['ones']) + ('|A*last' if args.rhs_apply_a else ''),
                    'precond': args.precond,
                    'policy': config.policy,
                    'tol': config.tol,
                    'max_iter': config.max_iter,
                    'seed': config.seed,
                    'gamma': history.gamma,
                },
            )
            write_history_csv(args.out, [record], timing=args.timing)
            if args.solution is not None:
                args.solution.parent.mkdir(parents=True, exist_ok=True)
                np.savetxt(args.solution, X, fmt='%.17g')
            if args.out != '-':
                printe(f'✓ wrote {args.out}')
            for event in history.events:
                printe(
                    f'  breakdown at iteration {event.iteration}: '
                    f'{event.kind.value} dependence, {event.policy_applied.value}',
                )
            report_status(history, 'solve')
        except BandedMinresError as e:
            printe(f'Error: {e}')
            return 1
        except Exception as e:
            printe(f'Unexpected error: {e}')
            raise

        if history.status is RunStatus.MAX_ITER and config.tol > 0:
            return 2
        return 0


class FigureCommand:
    help: ClassVar[str] = ''
    name = ''
    default_grid = 200

    def set_args(self, parser: argparse.ArgumentParser) -> None:
        problem = parser.add_argument_group('problem')
        problem.add_argument(
            '--grid',
            type=int,
            default=None,
            help=f'Grid side length (default: {self.default_grid})',
        )
        problem.add_argument('--shift', type=float, default=200.0, help='Shift sigma (default: 200)')
        problem.add_argument(
            '--no-precond',
            dest='precondition',
            action='store_false',
            help='Run without IC(0) preconditioning',
        )
        add_solver_args(parser)

    def process_args(
        self,
        parser: argparse.ArgumentParser,
        args: argparse.Namespace,
    ) -> None:
        if args.grid is None:
            args.grid = self.default_grid

    def run(
        self,
        problem: experiments.Problem,
        config: SolverConfig,
        project: ProjectConfig,
        args: argparse.Namespace,
    ) -> experiments.ExperimentResult:
        raise NotImplementedError

    def __call__(self, args: argparse.Namespace) -> int:
        try:
            config, project = load_config(args)
            spec = Laplacian2dSpec(grid=args.grid, shift=args.shift)
            problem = experiments.build_problem(spec, precondition=args.precondition)
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', MaxIterReached)
                result = self.run(problem, config, project, args)

            meta = [
                ('experiment', result.name),
                ('grid', spec.grid),
                ('shift', spec.shift),
                ('precond', 'ic0' if args.precondition else 'none'),
                ('tol', config.tol),
                ('max_iter', config.max_iter),
                ('policy', config.policy),
                ('seed', config.seed),
                *result.meta,
            ]
            if result.is_table:
                write_table_csv(args.out, result.fieldnames, result.rows, meta)
            else:
                write_history_csv(args.out, result.records, timing=args.timing, meta=meta)
            if args.out != '-':
                printe(f'✓ wrote {args.out}')
        except BandedMinresError as e:
            printe(f'Error: {e}')
            return 1
        except Exception as e:
            printe(f'Unexpected error: {e}')
            raise

        if result.hit_max_iter and config.tol > 0:
            printe(f'✗ {result.name}: some runs stopped at the iteration cap')
            return 2
        return 0


class Fig1(FigureCommand):
    help: ClassVar[str] = 'Block versus sequential MINRES for random right-hand sides.'
    name = 'fig1'

    def set_args(self, parser: argparse.ArgumentParser) -> None:
        super().set_args(parser)
        parser.add_argument('--rhs-count', type=int, default=10, help='Number of right-hand sides (default: 10)')

    def run(self, problem, config, project, args):
        return experiments.fig1(problem, config, rhs_count=args.rhs_count)


class Fig2(FigureCommand):
    help: ClassVar[str] = (
        'Ratio of block to sequential iterations for p right-hand sides: '
        'the all-ones vector and the first p-1 unit vectors.'
    )
    name = 'fig2'

    def set_args(self, parser: argparse.ArgumentParser) -> None:
        super().set_args(parser)
        parser.add_argument(
            '--p',
            type=int,
            nargs='+',
            default=list(experiments.FIG2_P_VALUES),
            help='Block sizes to compare (default: 1..10)',
        )

    def run(self, problem, config, project, args):
        return experiments.fig2(problem, config, p_values=args.p)


class Fig3(FigureCommand):
    help: ClassVar[str] = (
        'Dependence at the first iteration: b1 = e1 and b2 its image under '
        'the preconditioned operator.'
    )
    name = 'fig3'

    def run(self, problem, config, project, args):
        return experiments.fig3(problem, config)


class Fig4(FigureCommand):
    help: ClassVar[str] = 'Two right-hand sides: e1 with the ones vector (left) or with e2 (right).'
    name = 'fig4'

    def set_args(self, parser: argparse.ArgumentParser) -> None:
        super().set_args(parser)
        parser.add_argument('--variant', choices=['left', 'right'], default='left', help='Pair to run')

    def run(self, problem, config, project, args):
        return experiments.fig4(problem, config, variant=args.variant)


class EigmixCommand(FigureCommand):
    mode: ClassVar[EigmixMode]
    m_values: ClassVar[tuple[int, ...]]
    default_grid = experiments.DESK_EIGMIX_GRID

    def set_args(self, parser: argparse.ArgumentParser) -> None:
        super().set_args(parser)
        parser.add_argument(
            '--m',
            type=int,
            nargs='+',
            default=list(self.m_values),
            help=f'Overlap values (default: {" ".join(map(str, self.m_values))})',
        )
        parser.add_argument(
            '--trials',
            type=int,
            default=None,
            help=f'Random pairs per m (default: {experiments.DESK_EIGMIX_TRIALS})',
        )
        parser.add_argument(
            '--full-scale',
            action='store_true',
            help='Grid 200 and 100 trials per m',
        )
        parser.add_argument(
            '--threads',
            type=int,
            default=None,
            help='Parallel trials (default: BLOCK_MINRES_THREADS, config, or up to 4)',
        )

    def process_args(
        self,
        parser: argparse.ArgumentParser,
        args: argparse.Namespace,
    ) -> None:
        if args.full_scale:
            args.grid = args.grid or 200
            args.trials = args.trials or 100
        super().process_args(parser, args)
        if args.trials is None:
            args.trials = experiments.DESK_EIGMIX_TRIALS
        if args.threads is not None and args.threads < 1:
            usage_error(parser, '--threads must be positive')

    def run(self, problem, config, project, args):
        threads = args.threads or project.thread_count()
        return experiments.eigmix(
            problem,
            config,
            self.mode,
            m_values=args.m,
            trials=args.trials,
            threads=threads,
            timing=args.timing,
        )


class Fig5(EigmixCommand):
    help: ClassVar[str] = (
        'Average iterations for pairs built from the 200 smallest-magnitude '
        'eigenvectors sharing 2m components.'
    )
    name = 'fig5'
    mode = EigmixMode.SMALL_SMALL
    m_values = experiments.FIG5_M_VALUES


class Fig6(EigmixCommand):
    help: ClassVar[str] = (
        'Average iterations for pairs mixing small- and large-magnitude '
        'eigenvectors with overlap m.'
    )
    name = 'fig6'
    mode = EigmixMode.SMALL_LARGE
    m_values = experiments.FIG6_M_VALUES


class EigComponents(FigureCommand):
    help: ClassVar[str] = (
        'Magnitudes of the components of e1, the ones vector and e2 along '
        'the eigenvectors of the smallest-magnitude eigenvalues.'
    )
    name = 'eigcomponents'

    def set_args(self, parser: argparse.ArgumentParser) -> None:
        super().set_args(parser)
        parser.add_argument(
            '--count',
            type=int,
            default=experiments.EIGCOMPONENT_COUNT,
            help='Number of eigenvectors (default: 200)',
        )

    def run(self, problem, config, project, args):
        return experiments.eigcomponents(problem, count=args.count)


def _cli() -> CLI:
    return CLI(
        Solve(),
        Fig1(),
        Fig2(),
        Fig3(),
        Fig4(),
        Fig5(),
        Fig6(),
        EigComponents(),
        prog='banded-minres',
        description='Block MINRES on the banded Lanczos process',
    )


def cli() -> None:
    _cli()()


if __name__ == '__main__':
    cli()
