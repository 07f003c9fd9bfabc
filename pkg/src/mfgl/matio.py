"""Matrix file I/O: CSV and a small binary container.

CSV: one data point per row, '.' decimal separator, comma-delimited, no
header by default (an optional header row is supported via flag).  Values
are written with %.17g so float64 round-trips exactly.

Binary: magic b"MFGL", one version byte 0x01, then two little-endian u64
values (rows, cols), then rows*cols IEEE-754 f64 values, little-endian,
row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .exceptions import MatrixIOError

MAGIC = b"MFGL"
VERSION = 0x01
_HEADER = struct.Struct("<4sBQQ")

PathLike = Union[str, Path]


def _as_matrix(a) -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    if out.ndim == 1:
        out = out[None, :]
    if out.ndim != 2:
        raise MatrixIOError(f"matrices must be 2-D, got ndim={out.ndim}")
    return out


def write_csv(path: PathLike, a, header: Optional[Sequence[str]] = None) -> None:
    """Write a matrix as comma-separated %.17g rows."""
    a = _as_matrix(a)
    lines = []
    if header is not None:
        if len(header) != a.shape[1]:
            raise MatrixIOError(
                f"header has {len(header)} names for {a.shape[1]} columns"
            )
        lines.append(",".join(str(h) for h in header))
    for row in a:
        lines.append(",".join(f"{x:.17g}" for x in row))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise MatrixIOError(f"cannot write {path}: {exc}") from exc


def read_csv(path: PathLike, header: bool = False) -> np.ndarray:
    """Read a comma-separated matrix; set ``header=True`` to skip row one."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MatrixIOError(f"cannot read {path}: {exc}") from exc
    rows = []
    width = None
    for ln, line in enumerate(text.splitlines()):
        if ln == 0 and header:
            continue
        if not line.strip():
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise MatrixIOError(
                f"{path}: line {ln + 1} has {len(cells)} fields, expected {width}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise MatrixIOError(f"{path}: line {ln + 1}: {exc}") from exc
    if not rows:
        raise MatrixIOError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def write_binary(path: PathLike, a) -> None:
    """Write a matrix in the MFGL binary container."""
    a = _as_matrix(a)
    rows, cols = a.shape
    payload = np.ascontiguousarray(a, dtype="<f8").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
            fh.write(payload)
    except OSError as exc:
        raise MatrixIOError(f"cannot write {path}: {exc}") from exc


def read_binary(path: PathLike) -> np.ndarray:
    """Read a matrix from the MFGL binary container."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise MatrixIOError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise MatrixIOError(f"{path}: truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise MatrixIOError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise MatrixIOError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * rows * cols
    if len(blob) != expected:
        raise MatrixIOError(
            f"{path}: payload is {len(blob) - _HEADER.size} bytes, "
            f"expected {8 * rows * cols} for {rows}x{cols}"
        )
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    return data.reshape(rows, cols).astype(np.float64, copy=True)


def read_matrix(path: PathLike, header: bool = False) -> np.ndarray:
    """Read a matrix, picking the format by file suffix.

    ``.csv``/``.txt`` parse as CSV; anything else is tried as the binary
    container first with a CSV fallback on magic mismatch.
    """
    p = Path(path)
    if p.suffix.lower() in (".csv", ".txt"):
        return read_csv(p, header=header)
    try:
        return read_binary(p)
    except MatrixIOError:
        if p.suffix.lower() in (".mfgl", ".bin"):
            raise
        return read_csv(p, header=header)


def write_matrix(
    path: PathLike, a, header: Optional[Sequence[str]] = None
) -> None:
    """Write a matrix, picking the format by file suffix (CSV unless
    ``.mfgl``/``.bin``)."""
    p = Path(path)
    if p.suffix.lower() in (".mfgl", ".bin"):
        write_binary(p, a)
    else:
        write_csv(p, a, header=header)
