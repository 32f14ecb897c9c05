"""Instance mask images: 16-bit single-channel PNGs with 0 as background."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from gslift.errors import DataError, FormatError

_ACCEPTED_MODES = {"I;16", "I;16B", "I;16L", "I;16N"}


@dataclass
class MaskMap:
    """Per-pixel instance ids for one frame at one segmentation level.

    ``ids`` is a (H, W) uint16 array; id 0 marks pixels with no instance.
    """

    ids: np.ndarray

    def __post_init__(self) -> None:
        if self.ids.ndim != 2:
            raise DataError(f"mask must be 2-D, got shape {self.ids.shape}")
        if self.ids.dtype != np.uint16:
            self.ids = self.ids.astype(np.uint16)

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    @property
    def max_id(self) -> int:
        return int(self.ids.max()) if self.ids.size else 0

    def instance_ids(self) -> np.ndarray:
        """Sorted nonzero ids present in the mask."""
        ids = np.unique(self.ids)
        return ids[ids > 0]


def load_mask_map(path: str | os.PathLike, expected_size: tuple[int, int] | None = None) -> MaskMap:
    """Load a 16-bit single-channel PNG mask.

    ``expected_size`` is (width, height); a mismatch raises :class:`DataError`
    naming both sizes. Any other bit depth or channel layout raises
    :class:`FormatError`.
    """
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: cannot read PNG: {exc}") from None
    if img.format != "PNG":
        raise FormatError(f"{path}: expected a PNG file, got {img.format or 'unknown format'}")
    if img.mode not in _ACCEPTED_MODES:
        raise FormatError(
            f"{path}: expected a 16-bit single-channel mask, got mode '{img.mode}'"
        )
    ids = np.asarray(img, dtype=np.uint16)
    if expected_size is not None:
        width, height = expected_size
        if (img.width, img.height) != (width, height):
            raise DataError(
                f"{path}: mask size {img.width}x{img.height} does not match "
                f"frame size {width}x{height}"
            )
    return MaskMap(ids=ids)


def save_mask_map(mask: MaskMap | np.ndarray, path: str | os.PathLike) -> None:
    """Write a mask as a 16-bit single-channel PNG."""
    ids = mask.ids if isinstance(mask, MaskMap) else np.asarray(mask)
    if ids.ndim != 2:
        raise DataError(f"mask must be 2-D, got shape {ids.shape}")
    if ids.dtype != np.uint16:
        if ids.min() < 0 or ids.max() > np.iinfo(np.uint16).max:
            raise DataError("mask ids do not fit in uint16")
        ids = ids.astype(np.uint16)
    Image.fromarray(ids).save(path, format="PNG")
