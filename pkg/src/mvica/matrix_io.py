"""Plain CSV matrices and view manifests.

Matrices are stored one row per line, comma separated, no header, with 17
significant digits so that a store/load round trip is bit-exact.
"""

import math
from pathlib import Path

import numpy as np

from .model import MultiViewDataset


class MatrixParseError(ValueError):
    """Malformed matrix or manifest file."""


def store_matrix(matrix, path):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {matrix.shape}")
    lines = [",".join(format(v, ".17g") for v in row) for row in matrix]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_matrix(path):
    """Read a matrix written by :func:`store_matrix`.

    Raises
    ------
    MatrixParseError
        On ragged rows, non-numeric tokens or non-finite values; the message
        names the offending line (1-based).
    OSError
        If the file cannot be read.
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    width = None
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        tokens = line.split(",")
        try:
            row = [float(tok) for tok in tokens]
        except ValueError:
            raise MatrixParseError(f"{path}: line {lineno}: non-numeric value") from None
        if not all(math.isfinite(v) for v in row):
            raise MatrixParseError(f"{path}: line {lineno}: non-finite value")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise MatrixParseError(
                f"{path}: line {lineno}: expected {width} values, found {len(row)}"
            )
        rows.append(row)
    if not rows:
        raise MatrixParseError(f"{path}: empty matrix file")
    return np.array(rows, dtype=float)


def _parse_header(line, path):
    fields = {}
    for part in line.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise MatrixParseError(f"{path}: line 1: expected 'k=...,n=...'")
        fields[key.strip()] = value.strip()
    try:
        return int(fields["k"]), int(fields["n"])
    except (KeyError, ValueError):
        raise MatrixParseError(f"{path}: line 1: expected 'k=...,n=...'") from None


def read_manifest(path):
    """Parse a manifest: a ``k=...,n=...`` line, then one matrix path per line.

    Relative paths are resolved against the manifest's directory.

    Returns
    -------
    paths : list of Path
    k, n : int
    """
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise MatrixParseError(f"{path}: empty manifest")
    k, n = _parse_header(lines[0], path)
    paths = [(path.parent / p) if not Path(p).is_absolute() else Path(p) for p in lines[1:]]
    if not paths:
        raise MatrixParseError(f"{path}: manifest lists no views")
    return paths, k, n


def load_manifest(path):
    """Load the views listed in a manifest into a :class:`MultiViewDataset`."""
    paths, k, n = read_manifest(path)
    views = []
    for p in paths:
        x = load_matrix(p)
        if x.shape != (k, n):
            raise MatrixParseError(f"{p}: shape {x.shape} does not match declared ({k}, {n})")
        views.append(x)
    return MultiViewDataset(np.stack(views))


def write_manifest(path, view_paths, k, n):
    path = Path(path)
    lines = [f"k={k},n={n}"] + [str(p) for p in view_paths]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
