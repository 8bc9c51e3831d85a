from __future__ import annotations

import csv
import sys

from collections.abc import Iterable, Mapping, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, TYPE_CHECKING, Any

import numpy as np
import numpy.typing as npt

if TYPE_CHECKING:
    from collections.abc import Iterator

    from .banded_lanczos import BreakdownEvent

HISTORY_FORMAT = 'banded-minres-history/1'
TABLE_FORMAT = 'banded-minres-table/1'


class RunStatus(Enum):
    RUNNING = 'running'
    CONVERGED = 'converged'
    MAX_ITER = 'max_iter'
    EXHAUSTED = 'exhausted'


@dataclass
class ConvergenceHistory:
    """Per-iteration relative residuals of every column of one solve.

    ``computed[k]`` holds the computed residuals after ``k`` iterations,
    ``computed[0]`` being the starting residual. ``true`` maps audited
    iterations to explicitly evaluated residuals.
    """

    columns: int
    tol: float
    b_norms: npt.NDArray[np.float64]
    operator_norm: float = 0.0
    gamma: float = 0.0
    augmented: int = 0
    computed: list[npt.NDArray[np.float64]] = field(default_factory=list)
    true: dict[int, npt.NDArray[np.float64]] = field(default_factory=dict)
    events: list[BreakdownEvent] = field(default_factory=list)
    status: RunStatus = RunStatus.RUNNING
    wall_time: float = 0.0

    def record(
        self,
        iteration: int,
        computed: npt.NDArray[np.float64],
        true: npt.NDArray[np.float64] | None = None,
    ) -> None:
        if iteration != len(self.computed):
            raise ValueError(f'expected iteration {len(self.computed)}, got {iteration}')
        self.computed.append(np.array(computed, dtype=np.float64))
        if true is not None:
            self.true[iteration] = np.array(true, dtype=np.float64)

    def finish(self, status: RunStatus, wall_time: float) -> None:
        self.status = status
        self.wall_time = wall_time

    @property
    def iterations(self) -> int:
        return max(len(self.computed) - 1, 0)

    def as_array(self) -> npt.NDArray[np.float64]:
        """``(iterations + 1, columns)`` array of computed relative residuals."""
        return np.vstack(self.computed)

    def column(self, i: int) -> npt.NDArray[np.float64]:
        return self.as_array()[:, i]

    @property
    def final(self) -> npt.NDArray[np.float64]:
        return self.computed[-1]

    @property
    def converged(self) -> npt.NDArray[np.bool_]:
        if self.tol == 0.0:
            return np.zeros(self.columns, dtype=bool)
        return self.final <= self.tol

    @property
    def converged_at(self) -> list[int | None]:
        """First iteration at which each column met the tolerance."""
        if self.tol == 0.0:
            return [None] * self.columns
        hits = self.as_array() <= self.tol
        return [int(np.argmax(hits[:, i])) if hits[:, i].any() else None for i in range(self.columns)]


@dataclass
class RunRecord:
    experiment: str
    history: ConvergenceHistory
    config: Mapping[str, Any] = field(default_factory=dict)


def _format(value: Any) -> str:
    if isinstance(value, float | np.floating):
        return repr(float(value))
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


@contextmanager
def _open_target(target: str | Path | IO[str] | None) -> Iterator[IO[str]]:
    if target is None or target == '-':
        yield sys.stdout
    elif isinstance(target, str | Path):
        path = Path(target)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w', newline='') as f:
            yield f
    else:
        yield target


def _write_meta(out: IO[str], fmt: str, meta: Iterable[tuple[str, Any]]) -> None:
    out.write(f'# meta: format={fmt}\n')
    for key, value in meta:
        out.write(f'# meta: {key}={_format(value)}\n')


def history_meta(records: Sequence[RunRecord], timing: bool = False) -> list[tuple[str, Any]]:
    meta: list[tuple[str, Any]] = []
    for record in records:
        h = record.history
        prefix = record.experiment
        meta.extend((f'{prefix}.{key}', value) for key, value in record.config.items())
        meta.append((f'{prefix}.iterations', h.iterations))
        meta.append((f'{prefix}.status', h.status))
        meta.append((f'{prefix}.breakdowns', len(h.events)))
        meta.extend(
            (f'{prefix}.breakdown', f'{e.iteration}:{e.kind.value}:{e.policy_applied.value}')
            for e in h.events
        )
        if h.augmented:
            meta.append((f'{prefix}.augmented', h.augmented))
        if timing:
            meta.append((f'{prefix}.wall_seconds', h.wall_time))
    return meta


def write_history_csv(
    target: str | Path | IO[str] | None,
    records: Sequence[RunRecord],
    timing: bool = False,
    meta: Iterable[tuple[str, Any]] = (),
) -> None:
    """Write residual histories as ``experiment,iteration,column,...`` rows.

    ``true_rel_resid`` is present when any record audited true residuals;
    it is left empty on iterations that were not audited.
    """
    with_true = any(record.history.true for record in records)
    fieldnames = ['experiment', 'iteration', 'column', 'computed_rel_resid']
    if with_true:
        fieldnames.append('true_rel_resid')

    with _open_target(target) as out:
        _write_meta(out, HISTORY_FORMAT, [*meta, *history_meta(records, timing)])
        writer = csv.DictWriter(out, fieldnames=fieldnames, lineterminator='\n')
        writer.writeheader()
        for record in records:
            h = record.history
            for iteration, computed in enumerate(h.computed):
                audited = h.true.get(iteration)
                for column, value in enumerate(computed):
                    row = {
                        'experiment': record.experiment,
                        'iteration': iteration,
                        'column': column,
                        'computed_rel_resid': _format(value),
                    }
                    if with_true:
                        row['true_rel_resid'] = '' if audited is None else _format(audited[column])
                    writer.writerow(row)


def write_table_csv(
    target: str | Path | IO[str] | None,
    fieldnames: Sequence[str],
    rows: Iterable[Mapping[str, Any]],
    meta: Iterable[tuple[str, Any]] = (),
) -> None:
    """Write a summary table with a ``# meta:`` header block."""
    with _open_target(target) as out:
        _write_meta(out, TABLE_FORMAT, meta)
        writer = csv.DictWriter(
            out,
            fieldnames=list(fieldnames),
            extrasaction='ignore',
            lineterminator='\n',
        )
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format(v) for k, v in row.items()})


def read_csv_rows(path: str | Path) -> list[dict[str, str]]:
    """Read a file written by this module, skipping ``# meta:`` lines."""
    with Path(path).open(newline='') as f:
        return list(csv.DictReader(line for line in f if not line.startswith('#')))


def read_meta(path: str | Path) -> dict[str, str]:
    meta: dict[str, str] = {}
    with Path(path).open() as f:
        for line in f:
            if not line.startswith('# meta: '):
                break
            key, _, value = line[len('# meta: ') :].rstrip('\n').partition('=')
            meta.setdefault(key, value)
    return meta
