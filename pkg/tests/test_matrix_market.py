from pathlib import Path

import numpy as np
import pytest

from banded_minres.exceptions import BandedMinresError, NotSymmetric, ParseError
from banded_minres.linops import CsrSymmetricMatrix
from banded_minres.matrix_market import mm_read, mm_write
from banded_minres.problems import Laplacian2dSpec, build_shifted_laplacian


def write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / 'matrix.mtx'
    path.write_text(text)
    return path


def test_identity(tmp_path: Path):
    path = write(
        tmp_path,
        '%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1.0\n2 2 1.0\n',
    )
    np.testing.assert_array_equal(mm_read(path).toarray(), np.eye(2))


def test_symmetric_lower_triangle_is_expanded(tmp_path: Path):
    path = write(
        tmp_path,
        '%%MatrixMarket matrix coordinate real symmetric\n'
        '% a comment\n'
        '\n'
        '3 3 4\n'
        '1 1 2.0\n'
        '2 1 -1.0\n'
        '3 2 0.5\n'
        '3 3 4\n',
    )
    A = mm_read(path).toarray()
    np.testing.assert_array_equal(A, A.T)
    assert A[0, 1] == -1.0
    assert A[1, 2] == 0.5
    assert A[2, 2] == 4.0


def test_general_symmetric_content(tmp_path: Path):
    path = write(
        tmp_path,
        '%%MatrixMarket matrix coordinate integer general\n2 2 3\n1 2 3\n2 1 3\n2 2 1\n',
    )
    np.testing.assert_array_equal(mm_read(path).toarray(), [[0.0, 3.0], [3.0, 1.0]])


def test_general_nonsymmetric(tmp_path: Path):
    path = write(tmp_path, '%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 3.0\n')
    with pytest.raises(NotSymmetric):
        mm_read(path)


@pytest.mark.parametrize(
    ('text', 'line'),
    [
        ('%%MatrixMarket matrix array real general\n2 2\n', 1),
        ('not a header\n', 1),
        ('%%MatrixMarket matrix coordinate complex symmetric\n', 1),
        ('%%MatrixMarket matrix coordinate real hermitian\n', 1),
        ('%%MatrixMarket matrix coordinate real symmetric\n2 x 1\n', 2),
        ('%%MatrixMarket matrix coordinate real symmetric\n2 3 1\n', 2),
        ('%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n', 3),
        ('%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n3 1 1.0\n', 3),
        ('%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 1\n', 3),
        ('%%MatrixMarket matrix coordinate real symmetric\n%\n2 2 1\n1 1 one\n', 4),
        ('%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1.0\n', 3),
    ],
)
def test_parse_errors_carry_line_numbers(tmp_path: Path, text: str, line: int):
    with pytest.raises(ParseError) as info:
        mm_read(write(tmp_path, text))
    assert info.value.line == line
    assert str(info.value).startswith(f'line {line}:')


def test_missing_file(tmp_path: Path):
    with pytest.raises(BandedMinresError, match='Error reading matrix file'):
        mm_read(tmp_path / 'absent.mtx')


def test_round_trip_is_exact(tmp_path: Path, rng):
    A = build_shifted_laplacian(Laplacian2dSpec(grid=6, shift=1.0 / 3.0))
    perturbed = CsrSymmetricMatrix.from_scipy(A.csr * (1.0 + rng.random()))
    path = tmp_path / 'out' / 'laplacian.mtx'
    mm_write(path, perturbed, comment='shifted laplacian\ngrid 6')
    text = path.read_text().splitlines()
    assert text[0] == '%%MatrixMarket matrix coordinate real symmetric'
    assert text[1:3] == ['% shifted laplacian', '% grid 6']

    again = mm_read(path)
    assert again.n == perturbed.n
    np.testing.assert_array_equal(again.row_offsets, perturbed.row_offsets)
    np.testing.assert_array_equal(again.col_indices, perturbed.col_indices)
    np.testing.assert_array_equal(again.values, perturbed.values)
