"""Matrix Market coordinate files for symmetric real matrices."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import BandedMinresError, NotSymmetric, ParseError
from .linops import CsrSymmetricMatrix

BANNER = '%%MatrixMarket'
FIELDS = ('real', 'double', 'integer')
SYMMETRIES = ('symmetric', 'general')


def _parse_header(line: str) -> str:
    tokens = line.split()
    if len(tokens) != 5 or tokens[0] != BANNER:
        raise ParseError(f'expected "{BANNER} matrix coordinate <field> <symmetry>"', 1)
    _, obj, fmt, field, symmetry = (t.lower() for t in tokens)
    if obj != 'matrix' or fmt != 'coordinate':
        raise ParseError(f'only "matrix coordinate" files are supported, got "{obj} {fmt}"', 1)
    if field not in FIELDS:
        raise ParseError(f'unsupported field "{field}"', 1)
    if symmetry not in SYMMETRIES:
        raise ParseError(f'unsupported symmetry "{symmetry}"', 1)
    return symmetry


def mm_read(path: str | Path) -> CsrSymmetricMatrix:
    """Read a coordinate file; symmetric files store the lower triangle only.

    Raises:
        ParseError: On malformed content, with the offending line number.
        NotSymmetric: If a general file holds a nonsymmetric matrix.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise BandedMinresError(f'Error reading matrix file {path}: {e}') from e

    lines = text.splitlines()
    if not lines:
        raise ParseError('empty file', 1)
    symmetry = _parse_header(lines[0])

    size: tuple[int, int, int] | None = None
    rows: list[int] = []
    cols: list[int] = []
    values: list[float] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith('%'):
            continue
        tokens = line.split()
        if size is None:
            try:
                n_rows, n_cols, nnz = (int(t) for t in tokens)
            except ValueError as e:
                raise ParseError(f'bad size line "{line}"', lineno) from e
            if n_rows != n_cols:
                raise ParseError(f'matrix must be square, got {n_rows}x{n_cols}', lineno)
            size = (n_rows, n_cols, nnz)
            continue
        if len(tokens) != 3:
            raise ParseError(f'expected "row col value", got "{line}"', lineno)
        try:
            i, j, v = int(tokens[0]), int(tokens[1]), float(tokens[2])
        except ValueError as e:
            raise ParseError(f'bad entry "{line}"', lineno) from e
        if not (1 <= i <= size[0] and 1 <= j <= size[1]):
            raise ParseError(f'index ({i}, {j}) outside a {size[0]}x{size[1]} matrix', lineno)
        if symmetry == 'symmetric' and i < j:
            raise ParseError(f'entry ({i}, {j}) above the diagonal in a symmetric file', lineno)
        rows.append(i - 1)
        cols.append(j - 1)
        values.append(v)

    if size is None:
        raise ParseError('missing size line', len(lines))
    if len(values) != size[2]:
        raise ParseError(f'expected {size[2]} entries, found {len(values)}', len(lines))

    r = np.array(rows, dtype=np.int64)
    c = np.array(cols, dtype=np.int64)
    v = np.array(values, dtype=np.float64)
    if symmetry == 'symmetric':
        off = r != c
        r, c, v = np.concatenate([r, c[off]]), np.concatenate([c, r[off]]), np.concatenate([v, v[off]])

    matrix = sp.coo_matrix((v, (r, c)), shape=size[:2]).tocsr()
    try:
        return CsrSymmetricMatrix.from_scipy(matrix)
    except NotSymmetric as e:
        raise NotSymmetric(f'{path} does not hold a symmetric matrix') from e


def mm_write(path: str | Path, M: CsrSymmetricMatrix, comment: str | None = None) -> None:
    """Write the lower triangle of ``M`` as a symmetric coordinate file."""
    lower = sp.tril(M.csr).tocoo()
    order = np.lexsort((lower.row, lower.col))
    lines = [f'{BANNER} matrix coordinate real symmetric']
    if comment:
        lines.extend(f'% {text}' for text in comment.splitlines())
    lines.append(f'{M.n} {M.n} {lower.nnz}')
    lines.extend(
        f'{i + 1} {j + 1} {float(v)!r}'
        for i, j, v in zip(lower.row[order], lower.col[order], lower.data[order], strict=True)
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join(lines) + '\n')
