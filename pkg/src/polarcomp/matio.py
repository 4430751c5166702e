"""Matrix files: binary PCMX and small CSV.

PCMX layout: ``b"PCMX"``, u32 version (1), u64 rows, u64 cols, then
``rows * cols`` little-endian float64 values in row-major order. The CSV
variant has a ``rows,cols`` header line followed by one matrix row per line.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PCMX"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class MatrixFormatError(ValueError):
    pass


def _as_2d(M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        return M.reshape(-1, 1)
    if M.ndim != 2:
        raise ValueError(f"only vectors and matrices can be written, got ndim={M.ndim}")
    return M


def write_pcmx(path, M) -> None:
    M = _as_2d(M)
    rows, cols = M.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def read_pcmx(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise MatrixFormatError(f"{path}: truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: not a PCMX file")
    if version != VERSION:
        raise MatrixFormatError(f"{path}: unsupported PCMX version {version}")
    body = data[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise MatrixFormatError(f"{path}: expected {rows}x{cols} values, "
                                f"found {len(body)} payload bytes")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)


def write_csv_matrix(path, M) -> None:
    M = _as_2d(M)
    lines = [f"{M.shape[0]},{M.shape[1]}"]
    lines += [",".join(repr(float(v)) for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv_matrix(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise MatrixFormatError(f"{path}: empty file")
    try:
        rows, cols = (int(v) for v in lines[0].split(","))
        vals = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    except ValueError as exc:
        raise MatrixFormatError(f"{path}: {exc}") from None
    M = np.array(vals, dtype=np.float64).reshape(-1, cols) if vals else np.zeros((0, cols))
    if M.shape != (rows, cols):
        raise MatrixFormatError(f"{path}: header says {rows}x{cols}, body has {M.shape}")
    return M


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(4)
    return read_pcmx(path) if head == MAGIC else read_csv_matrix(path)


def write_matrix(path, M) -> None:
    """CSV when the path ends in ``.csv``, PCMX otherwise."""
    if str(path).lower().endswith(".csv"):
        write_csv_matrix(path, M)
    else:
        write_pcmx(path, M)
