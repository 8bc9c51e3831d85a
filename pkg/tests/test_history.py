import io

from pathlib import Path

import numpy as np
import pytest

from banded_minres.banded_lanczos import BreakdownEvent, BreakdownKind, PolicyApplied
from banded_minres.history import (
    HISTORY_FORMAT,
    TABLE_FORMAT,
    ConvergenceHistory,
    RunRecord,
    RunStatus,
    read_csv_rows,
    read_meta,
    write_history_csv,
    write_table_csv,
)


@pytest.fixture
def history() -> ConvergenceHistory:
    h = ConvergenceHistory(columns=2, tol=1e-2, b_norms=np.ones(2), gamma=1e-8)
    h.record(0, np.array([1.0, 1.0]))
    h.record(1, np.array([0.5, 0.1]), true=np.array([0.5, 0.1]))
    h.record(2, np.array([0.25, 0.001]))
    h.record(3, np.array([0.001, 0.0005]))
    h.events.append(BreakdownEvent(2, 1, BreakdownKind.NEAR, 1e-9, PolicyApplied.RANDOM_REPLACEMENT))
    h.finish(RunStatus.CONVERGED, 0.125)
    return h


def test_history_accessors(history: ConvergenceHistory):
    assert history.iterations == 3
    assert history.as_array().shape == (4, 2)
    np.testing.assert_array_equal(history.column(1), [1.0, 0.1, 0.001, 0.0005])
    assert history.converged.all()
    assert history.converged_at == [3, 2]


def test_record_must_be_sequential():
    h = ConvergenceHistory(columns=1, tol=0.0, b_norms=np.ones(1))
    with pytest.raises(ValueError, match='expected iteration 0'):
        h.record(1, np.ones(1))


def test_zero_tolerance_never_converges():
    h = ConvergenceHistory(columns=1, tol=0.0, b_norms=np.ones(1))
    h.record(0, np.zeros(1))
    assert not h.converged.any()
    assert h.converged_at == [None]


def test_history_csv(tmp_path: Path, history: ConvergenceHistory):
    path = tmp_path / 'nested' / 'run.csv'
    write_history_csv(path, [RunRecord('demo', history, {'policy': PolicyApplied.RANDOM_REPLACEMENT})])

    lines = path.read_text().splitlines()
    assert lines[0] == f'# meta: format={HISTORY_FORMAT}'
    meta = read_meta(path)
    assert meta['format'] == HISTORY_FORMAT
    assert meta['demo.policy'] == 'replace'
    assert meta['demo.iterations'] == '3'
    assert meta['demo.status'] == 'converged'
    assert meta['demo.breakdown'] == '2:near:replace'
    assert 'demo.wall_seconds' not in meta

    rows = read_csv_rows(path)
    assert len(rows) == (history.iterations + 1) * history.columns
    assert list(rows[0]) == ['experiment', 'iteration', 'column', 'computed_rel_resid', 'true_rel_resid']
    assert rows[2] == {
        'experiment': 'demo',
        'iteration': '1',
        'column': '0',
        'computed_rel_resid': '0.5',
        'true_rel_resid': '0.5',
    }
    assert rows[0]['true_rel_resid'] == ''
    assert float(rows[7]['computed_rel_resid']) == 0.0005


def test_history_csv_is_reproducible(history: ConvergenceHistory):
    outputs = []
    for _ in range(2):
        buffer = io.StringIO()
        write_history_csv(buffer, [RunRecord('demo', history)], meta=[('grid', 10)])
        outputs.append(buffer.getvalue())
    assert outputs[0] == outputs[1]
    assert '# meta: grid=10\n' in outputs[0]


def test_timing_is_opt_in(history: ConvergenceHistory):
    buffer = io.StringIO()
    write_history_csv(buffer, [RunRecord('demo', history)], timing=True)
    assert '# meta: demo.wall_seconds=0.125\n' in buffer.getvalue()


def test_history_csv_without_audits():
    h = ConvergenceHistory(columns=1, tol=1e-8, b_norms=np.ones(1))
    h.record(0, np.ones(1))
    buffer = io.StringIO()
    write_history_csv(buffer, [RunRecord('plain', h)])
    header = [line for line in buffer.getvalue().splitlines() if not line.startswith('#')][0]
    assert header == 'experiment,iteration,column,computed_rel_resid'


def test_stdout_target(capsys, history: ConvergenceHistory):
    write_history_csv('-', [RunRecord('demo', history)])
    assert capsys.readouterr().out.startswith(f'# meta: format={HISTORY_FORMAT}\n')


def test_table_csv(tmp_path: Path):
    path = tmp_path / 'table.csv'
    write_table_csv(
        path,
        ['p', 'ratio'],
        [{'p': 1, 'ratio': 1.0, 'ignored': 'x'}, {'p': 2, 'ratio': 0.1}],
        meta=[('experiment', 'fig2')],
    )
    assert read_meta(path) == {'format': TABLE_FORMAT, 'experiment': 'fig2'}
    assert read_csv_rows(path) == [{'p': '1', 'ratio': '1.0'}, {'p': '2', 'ratio': '0.1'}]
