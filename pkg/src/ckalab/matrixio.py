"""Matrix and mask file formats shared by the CLI, the service, and tests.

Two matrix encodings:

* CSV: numeric rows, no header, '.' decimal separator, one example per row.
* binary: magic bytes ``RSM1``, then row count and column count as 32-bit
  little-endian unsigned integers, then row-major float64 little-endian
  values.

The mask sidecar is a single CSV row of 0/1 integers.
"""

from __future__ import annotations

import io
import struct
import warnings

import numpy as np

from .errors import ParseError

MAGIC = b"RSM1"
_HEADER = struct.Struct("<4sII")


def matrix_to_binary(matrix: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(matrix, dtype="<f8")
    n, p = arr.shape
    return _HEADER.pack(MAGIC, n, p) + arr.tobytes()


def matrix_from_binary(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ParseError("binary matrix truncated before header")
    magic, n, p = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError("bad magic bytes for binary matrix")
    expected = _HEADER.size + 8 * n * p
    if len(data) != expected:
        raise ParseError(
            f"binary matrix payload is {len(data)} bytes, expected {expected}"
        )
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    return values.reshape(n, p).astype(np.float64)


def matrix_to_csv(matrix: np.ndarray) -> str:
    rows = []
    for row in np.asarray(matrix, dtype=np.float64):
        rows.append(",".join(format(v, ".17g") for v in row))
    return "\n".join(rows) + "\n"


def matrix_from_csv(text: str) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # loadtxt warns on empty input
            arr = np.loadtxt(
                io.StringIO(text), delimiter=",", ndmin=2, dtype=np.float64
            )
    except ValueError as exc:
        raise ParseError(f"could not parse CSV matrix: {exc}") from exc
    if arr.size == 0:
        raise ParseError("CSV matrix is empty")
    return arr


def parse_matrix_bytes(data: bytes) -> np.ndarray:
    """Decode matrix bytes, sniffing binary by its magic prefix."""
    if data[:4] == MAGIC:
        return matrix_from_binary(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("matrix bytes are neither RSM1 binary nor UTF-8 CSV") from exc
    return matrix_from_csv(text)


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_matrix_bytes(fh.read())


def write_matrix(path, matrix: np.ndarray, fmt: str = "csv") -> None:
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(matrix_to_binary(matrix))
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(matrix_to_csv(matrix))
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def mask_to_csv(mask: np.ndarray) -> str:
    return ",".join("1" if bool(v) else "0" for v in np.asarray(mask)) + "\n"


def mask_from_csv(text: str) -> np.ndarray:
    tokens = [t.strip() for t in text.strip().split(",") if t.strip() != ""]
    if not tokens:
        raise ParseError("mask file is empty")
    if any(t not in ("0", "1") for t in tokens):
        raise ParseError("mask entries must be 0 or 1")
    return np.array([t == "1" for t in tokens], dtype=bool)


def read_mask(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        return mask_from_csv(fh.read())


def write_mask(path, mask: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(mask_to_csv(mask))
