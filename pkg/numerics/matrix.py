"""
Dense matrix helpers and the plain-text matrix format used by fixtures and the CLI.

A matrix is a 2-D float64 numpy array. Text files look like

    2 3
    1 0 0.5
    -2 4 1e-3

and are written with 17 significant digits.
"""
from pathlib import Path

import numpy as np

from numerics.errors import MatrixFormatError, NonFiniteError, ShapeError


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Validate user input and return it as a C-ordered float64 matrix"""
    try:
        mat = np.array(data, dtype=np.float64, order="C")
    except (TypeError, ValueError) as e:
        raise ShapeError(f"{name} is not a numeric array: {e}") from e
    if mat.ndim == 1:
        mat = mat.reshape(-1, 1)
    if mat.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {mat.ndim} dimensions")
    if mat.shape[0] < 1 or mat.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and one column, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise NonFiniteError(f"{name} contains NaN or Inf entries")
    return mat


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"Cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def frobenius(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return 0.0
    magnitude = float(np.max(np.abs(a)))
    if magnitude == 0.0 or not np.isfinite(magnitude):
        return magnitude
    scaled = a / magnitude
    return magnitude * float(np.sqrt(np.sum(scaled * scaled)))


def format_matrix(mat: np.ndarray) -> str:
    rows, cols = mat.shape
    lines = [f"{rows} {cols}"]
    for row in mat:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise MatrixFormatError("Empty matrix text")
    header = lines[0].split()
    if len(header) != 2:
        raise MatrixFormatError(f"Matrix header must be 'rows cols', got {lines[0]!r}")
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError as e:
        raise MatrixFormatError(f"Matrix header is not two integers: {lines[0]!r}") from e
    if rows < 1 or cols < 1:
        raise MatrixFormatError(f"Matrix dimensions must be positive, got {rows}x{cols}")
    body = lines[1:]
    if len(body) != rows:
        raise MatrixFormatError(f"Expected {rows} data rows, found {len(body)}")
    values = []
    for i, line in enumerate(body):
        fields = line.split()
        if len(fields) != cols:
            raise MatrixFormatError(f"Row {i} has {len(fields)} entries, expected {cols}")
        try:
            values.append([float(f) for f in fields])
        except ValueError as e:
            raise MatrixFormatError(f"Row {i} is not numeric: {e}") from e
    try:
        return as_matrix(values)
    except NonFiniteError as e:
        raise MatrixFormatError(str(e)) from e


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text(encoding="utf-8"))


def write_matrix(path, mat: np.ndarray) -> None:
    Path(path).write_text(format_matrix(mat), encoding="utf-8")
