"""banded-minres: Block MINRES on the banded Lanczos process."""

from .block_minres import BlockMinres, minres_single, solve
from .config import BreakdownPolicy, SolverConfig
from .history import ConvergenceHistory, RunStatus
from .linops import CsrSymmetricMatrix, SymmetricOperator
from .precond import SplitPreconditionedOperator, compose_split, ic0_factorize

__all__ = [
    'BlockMinres',
    'BreakdownPolicy',
    'ConvergenceHistory',
    'CsrSymmetricMatrix',
    'RunStatus',
    'SolverConfig',
    'SplitPreconditionedOperator',
    'SymmetricOperator',
    'compose_split',
    'ic0_factorize',
    'minres_single',
    'solve',
]
