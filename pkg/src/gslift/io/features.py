"""Per-instance feature tables (LBGF binary files).

Layout: magic ``LBGF``, u32 version (1), u32 row count M, u32 dimension D,
then M*D little-endian float32 values row-major. Row m-1 holds the feature
for mask id m; ids are dense from 1.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass

import numpy as np

from gslift.errors import DataError, FormatError, IndexingError, TruncationError

log = logging.getLogger(__name__)

MAGIC = b"LBGF"
VERSION = 1


@dataclass
class FeatureTable:
    """Unit-norm feature vectors for the instances of one frame and level."""

    rows: np.ndarray

    def __post_init__(self) -> None:
        if self.rows.ndim != 2:
            raise DataError(f"feature table must be 2-D, got shape {self.rows.shape}")

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def dimension(self) -> int:
        return self.rows.shape[1]

    def feature_for(self, mask_id: int) -> np.ndarray:
        """Feature row for a 1-based mask id."""
        if mask_id < 1 or mask_id > len(self):
            raise IndexingError(
                f"mask id {mask_id} out of range for feature table with {len(self)} rows"
            )
        return self.rows[mask_id - 1]


def load_features(path: str | os.PathLike) -> FeatureTable:
    """Read an LBGF file into a float64 table.

    Raises :class:`FormatError` on a bad magic or version,
    :class:`TruncationError` on short payloads, and :class:`DataError` on
    non-finite values. Zero-norm rows are legal (an instance with no pixels)
    and logged as a warning; other rows are expected to be unit-norm as
    written but are returned untouched.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise TruncationError(f"{path}: file shorter than the 16-byte feature header")
    magic = data[:4]
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version, count, dim = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported feature file version {version}")
    need = 16 + count * dim * 4
    if len(data) < need:
        raise TruncationError(
            f"{path}: payload truncated, expected {count}x{dim} float32 values "
            f"({need - 16} bytes) but found {len(data) - 16}"
        )
    rows = np.frombuffer(data, dtype="<f4", count=count * dim, offset=16)
    rows = rows.reshape(count, dim).astype(np.float64)
    if not np.all(np.isfinite(rows)):
        bad = int(np.nonzero(~np.isfinite(rows).all(axis=1))[0][0])
        raise DataError(f"{path}: non-finite feature value in row {bad} (mask id {bad + 1})")
    norms = np.linalg.norm(rows, axis=1)
    zero = np.nonzero(norms < 1e-12)[0]
    if zero.size:
        log.warning(
            "%s: %d zero-norm feature row(s) (first at row %d); rows without "
            "pixel evidence cannot participate in semantic matching",
            path, zero.size, int(zero[0]) + 1,
        )
    live = norms >= 1e-12
    rows[live] /= norms[live, None]
    return FeatureTable(rows=rows)


def save_features(rows: np.ndarray, path: str | os.PathLike) -> None:
    """Write a feature table as an LBGF file (values stored as float32)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise DataError(f"feature table must be 2-D, got shape {rows.shape}")
    if not np.all(np.isfinite(rows)):
        raise DataError("feature table contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, rows.shape[0], rows.shape[1]))
        fh.write(rows.astype("<f4").tobytes())
