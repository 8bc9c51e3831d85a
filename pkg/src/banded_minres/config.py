from __future__ import annotations

import os
import tomllib

from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Self

from .exceptions import ConfigError

CONFIG_FILENAME = '.banded-minres.toml'
TOOL_SECTION = 'banded-minres'
THREADS_ENV = 'BLOCK_MINRES_THREADS'


class BreakdownPolicy(Enum):
    REPLACE = 'replace'
    SHRINK = 'shrink'


def find_config_file(start_dir: Path | None = None) -> Path | None:
    """Search upward from start_dir for a config file.

    Searches for .banded-minres.toml or pyproject.toml with
    [tool.banded-minres]. Searches from start_dir upward to filesystem root.

    Args:
        start_dir: Directory to start searching from (default: cwd)

    Returns:
        Path to config file, or None if not found
    """
    if start_dir is None:
        start_dir = Path.cwd()

    current = start_dir.resolve()

    while True:
        standalone_config = current / CONFIG_FILENAME
        if standalone_config.exists():
            return standalone_config

        pyproject = current / 'pyproject.toml'
        if pyproject.exists():
            try:
                with pyproject.open('rb') as f:
                    data = tomllib.load(f)
                if TOOL_SECTION in data.get('tool', {}):
                    return pyproject
            except Exception:  # noqa: BLE001, S110
                # Invalid TOML or read error, skip this file
                pass

        parent = current.parent
        if parent == current:
            return None
        current = parent


@dataclass(frozen=True)
class SolverConfig:
    """Options for one block MINRES solve.

    ``tol`` is the per-column relative residual target; ``tol == 0`` runs
    exactly ``max_iter`` steps. ``gamma=None`` derives the dependence
    tolerance as ``gamma_relative`` times a power-iteration estimate of the
    operator norm.
    """

    tol: float = 1e-8
    max_iter: int = 1000
    gamma: float | None = None
    gamma_relative: float = 1e-8
    policy: BreakdownPolicy = BreakdownPolicy.REPLACE
    seed: int = 0
    reorthogonalize: bool = True
    true_residual_check_every: int = 0
    pool_size: int = 1
    norm_iterations: int = 10
    gamma_start: float = 1e-12

    def __post_init__(self) -> None:
        if not isinstance(self.policy, BreakdownPolicy):
            try:
                object.__setattr__(self, 'policy', BreakdownPolicy(self.policy))
            except ValueError as e:
                raise ConfigError(
                    f'unknown breakdown policy {self.policy!r}; '
                    f'expected one of {[p.value for p in BreakdownPolicy]}',
                ) from e
        if self.tol < 0:
            raise ConfigError(f'tol must be nonnegative, got {self.tol}')
        if self.max_iter < 1:
            raise ConfigError(f'max_iter must be at least 1, got {self.max_iter}')
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError(f'gamma must be positive, got {self.gamma}')
        if self.gamma_relative <= 0:
            raise ConfigError(f'gamma-relative must be positive, got {self.gamma_relative}')
        if self.pool_size < 0:
            raise ConfigError(f'pool-size must be nonnegative, got {self.pool_size}')
        if self.true_residual_check_every < 0:
            raise ConfigError('true-residual-check-every must be nonnegative')

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        """Create SolverConfig from a dictionary with kebab-case keys."""
        known = {f.name.replace('_', '-'): f.name for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f'unknown solver option(s): {", ".join(unknown)}')
        return cls(**{known[key]: value for key, value in data.items()})

    def merged(self, **overrides: Any) -> Self:
        """Return a copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


@dataclass
class ProjectConfig:
    """Solver defaults and harness settings for a project."""

    solver: SolverConfig = field(default_factory=SolverConfig)
    threads: int | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        """Create ProjectConfig from dictionary."""
        solver = SolverConfig.from_dict(data.get('solver', {}))
        harness = data.get('harness', {})
        threads = harness.get('threads')
        if threads is not None and (not isinstance(threads, int) or threads < 1):
            raise ConfigError(f'harness threads must be a positive integer, got {threads!r}')
        return cls(solver=solver, threads=threads)

    @classmethod
    def from_file(cls, config_path: Path) -> Self:
        """Load configuration from a TOML file.

        Supports both standalone .banded-minres.toml files and
        pyproject.toml files with [tool.banded-minres] section.

        Raises:
            ConfigError: If file not found, invalid TOML, or missing config
        """
        if not config_path.exists():
            raise ConfigError(f'Config file not found: {config_path}')

        try:
            with config_path.open('rb') as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f'Invalid TOML in config file: {e}') from e
        except Exception as e:
            raise ConfigError(f'Error reading config file: {e}') from e

        if config_path.name == 'pyproject.toml':
            if TOOL_SECTION not in data.get('tool', {}):
                raise ConfigError(
                    f'{config_path} does not contain [tool.{TOOL_SECTION}] section',
                )
            data = data['tool'][TOOL_SECTION]

        return cls.from_dict(data)

    @classmethod
    def discover(cls, start_dir: Path | None = None) -> Self:
        """Load the nearest config file, or defaults when there is none."""
        config_path = find_config_file(start_dir)
        if config_path is None:
            return cls()
        return cls.from_file(config_path)

    def thread_count(self) -> int:
        """Worker cap for parallel trials; the environment wins over the file."""
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                value = int(env)
            except ValueError as e:
                raise ConfigError(f'{THREADS_ENV} must be an integer, got {env!r}') from e
            if value < 1:
                raise ConfigError(f'{THREADS_ENV} must be positive, got {value}')
            return value
        if self.threads is not None:
            return self.threads
        return min(4, os.cpu_count() or 1)
