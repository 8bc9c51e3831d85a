from pathlib import Path

import pytest

from banded_minres.config import (
    THREADS_ENV,
    BreakdownPolicy,
    ProjectConfig,
    SolverConfig,
    find_config_file,
)
from banded_minres.exceptions import ConfigError


def test_solver_defaults():
    config = SolverConfig()
    assert config.tol == 1e-8
    assert config.max_iter == 1000
    assert config.gamma is None
    assert config.policy is BreakdownPolicy.REPLACE
    assert config.reorthogonalize


def test_policy_from_string():
    assert SolverConfig(policy='shrink').policy is BreakdownPolicy.SHRINK


@pytest.mark.parametrize(
    'kwargs',
    [
        {'policy': 'drop'},
        {'tol': -1.0},
        {'max_iter': 0},
        {'gamma': 0.0},
        {'gamma_relative': -1e-8},
        {'pool_size': -1},
        {'true_residual_check_every': -2},
    ],
)
def test_invalid_solver_options(kwargs):
    with pytest.raises(ConfigError):
        SolverConfig(**kwargs)


def test_from_dict_uses_kebab_case():
    config = SolverConfig.from_dict({'max-iter': 50, 'gamma-relative': 1e-6, 'policy': 'shrink'})
    assert config.max_iter == 50
    assert config.gamma_relative == 1e-6
    assert config.policy is BreakdownPolicy.SHRINK


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match='maxit'):
        SolverConfig.from_dict({'maxit': 5})


def test_merged_skips_none():
    config = SolverConfig(tol=1e-6).merged(tol=None, max_iter=7, policy='shrink')
    assert config.tol == 1e-6
    assert config.max_iter == 7
    assert config.policy is BreakdownPolicy.SHRINK


def test_standalone_config_file(tmp_path: Path):
    path = tmp_path / '.banded-minres.toml'
    path.write_text('[solver]\ntol = 1e-10\nseed = 3\n\n[harness]\nthreads = 2\n')
    project = ProjectConfig.from_file(path)
    assert project.solver.tol == 1e-10
    assert project.solver.seed == 3
    assert project.threads == 2


def test_pyproject_config_file(tmp_path: Path):
    path = tmp_path / 'pyproject.toml'
    path.write_text('[tool.banded-minres.solver]\npolicy = "shrink"\n')
    assert ProjectConfig.from_file(path).solver.policy is BreakdownPolicy.SHRINK


def test_pyproject_without_section(tmp_path: Path):
    path = tmp_path / 'pyproject.toml'
    path.write_text('[project]\nname = "x"\n')
    with pytest.raises(ConfigError, match='does not contain'):
        ProjectConfig.from_file(path)


def test_missing_and_invalid_files(tmp_path: Path):
    with pytest.raises(ConfigError, match='not found'):
        ProjectConfig.from_file(tmp_path / 'absent.toml')
    bad = tmp_path / 'bad.toml'
    bad.write_text('[solver\n')
    with pytest.raises(ConfigError, match='Invalid TOML'):
        ProjectConfig.from_file(bad)


def test_invalid_threads(tmp_path: Path):
    path = tmp_path / '.banded-minres.toml'
    path.write_text('[harness]\nthreads = 0\n')
    with pytest.raises(ConfigError):
        ProjectConfig.from_file(path)


def test_find_config_file_searches_upward(tmp_path: Path):
    (tmp_path / '.banded-minres.toml').write_text('[solver]\n')
    nested = tmp_path / 'a' / 'b'
    nested.mkdir(parents=True)
    assert find_config_file(nested) == (tmp_path / '.banded-minres.toml').resolve()


def test_find_config_file_prefers_standalone(tmp_path: Path):
    (tmp_path / 'pyproject.toml').write_text('[tool.banded-minres.solver]\ntol = 1e-3\n')
    (tmp_path / '.banded-minres.toml').write_text('[solver]\ntol = 1e-4\n')
    assert ProjectConfig.discover(tmp_path).solver.tol == 1e-4


def test_thread_count_precedence(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert ProjectConfig(threads=3).thread_count() == 3
    assert 1 <= ProjectConfig().thread_count() <= 4
    monkeypatch.setenv(THREADS_ENV, '6')
    assert ProjectConfig(threads=3).thread_count() == 6
    monkeypatch.setenv(THREADS_ENV, 'many')
    with pytest.raises(ConfigError):
        ProjectConfig().thread_count()
