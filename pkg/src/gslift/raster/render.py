"""Tiled front-to-back alpha compositing over depth-sorted splats."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit, prange
from PIL import Image

from gslift.errors import FormatError, PreconditionError, TruncationError
from gslift.raster.projection import ProjectedGaussians

TILE = 16

# Compositing contract shared with every conformance oracle: per-splat alpha
# is clamped to 0.99, contributions below 1/255 are skipped, and the walk
# stops once transmittance drops under 1e-4 (after compositing the splat
# that crossed the threshold).
ALPHA_CLAMP = 0.99
ALPHA_SKIP = 1.0 / 255.0
T_STOP = 1e-4

DUMP_MAGIC = b"LBGB"
DUMP_VERSION = 1


@dataclass
class RenderBuffers:
    """Raster output for one view.

    ``max_contributor`` stores, per pixel, the original field index of the
    Gaussian with the largest compositing weight alpha_i * T_i (or -1 when
    nothing hit the pixel); ``max_weight`` stores that weight. ``color`` is
    None when the render was contributor-only.
    """

    color: np.ndarray | None
    alpha: np.ndarray
    max_contributor: np.ndarray
    max_weight: np.ndarray

    @property
    def height(self) -> int:
        return self.alpha.shape[0]

    @property
    def width(self) -> int:
        return self.alpha.shape[1]


def render_frame(
    projected: ProjectedGaussians,
    width: int,
    height: int,
    mode: str = "both",
    background=(1.0, 1.0, 1.0),
    subset=None,
) -> RenderBuffers:
    """Composite depth-sorted projected Gaussians into image buffers.

    ``mode`` is "color", "contributor", or "both". ``subset`` restricts
    compositing to the given original field indices without re-projecting,
    so contributor ids stay comparable across subset renders.
    """
    if mode not in ("color", "contributor", "both"):
        raise PreconditionError(f"unknown render mode '{mode}'")
    if width <= 0 or height <= 0:
        raise PreconditionError(f"viewport must be positive, got {width}x{height}")
    if not projected.is_depth_sorted():
        raise PreconditionError("projected Gaussians must be depth-sorted before rendering")

    p = projected
    if subset is not None:
        members = np.asarray(sorted(set(int(i) for i in subset)), dtype=np.int64)
        keep = np.isin(p.index, members)
        p = p.take(np.nonzero(keep)[0])

    want_color = mode in ("color", "both")
    bg = np.asarray(background, dtype=np.float64)
    if bg.shape != (3,):
        raise PreconditionError("background must have 3 channels")

    color = np.empty((height, width, 3), dtype=np.float32)
    alpha = np.zeros((height, width), dtype=np.float32)
    contributor = np.full((height, width), -1, dtype=np.int32)
    weight = np.zeros((height, width), dtype=np.float32)

    pair_src, tile_offsets, n_tiles_x, n_tiles_y = _bin_tiles(p, width, height)
    if pair_src.size == 0:
        color[:] = bg.astype(np.float32)
        return RenderBuffers(
            color=color if want_color else None,
            alpha=alpha,
            max_contributor=contributor,
            max_weight=weight,
        )

    a = p.cov2d[:, 0, 0]
    b = p.cov2d[:, 0, 1]
    c = p.cov2d[:, 1, 1]
    det = a * c - b * b
    conic = np.stack([c / det, -b / det, a / det], axis=1)

    _composite_tiles(
        width,
        height,
        n_tiles_x,
        n_tiles_y,
        pair_src,
        tile_offsets,
        np.ascontiguousarray(p.mean2d),
        np.ascontiguousarray(conic),
        np.ascontiguousarray(p.opacity),
        np.ascontiguousarray(p.color),
        np.ascontiguousarray(p.index),
        bg,
        want_color,
        color,
        alpha,
        contributor,
        weight,
    )
    return RenderBuffers(
        color=color if want_color else None,
        alpha=alpha,
        max_contributor=contributor,
        max_weight=weight,
    )


def _bin_tiles(p: ProjectedGaussians, width: int, height: int):
    """Expand each splat footprint into (tile, splat) pairs, tile-major.

    Pairs within a tile keep the incoming depth order, so the kernel can walk
    them front to back directly.
    """
    n_tiles_x = (width + TILE - 1) // TILE
    n_tiles_y = (height + TILE - 1) // TILE
    if len(p) == 0:
        return (
            np.empty(0, dtype=np.int32),
            np.zeros(n_tiles_x * n_tiles_y + 1, dtype=np.int64),
            n_tiles_x,
            n_tiles_y,
        )

    u, v, r = p.mean2d[:, 0], p.mean2d[:, 1], p.radius
    tx0 = np.clip(np.floor((u - r) / TILE), 0, n_tiles_x - 1).astype(np.int64)
    tx1 = np.clip(np.floor((u + r) / TILE), 0, n_tiles_x - 1).astype(np.int64)
    ty0 = np.clip(np.floor((v - r) / TILE), 0, n_tiles_y - 1).astype(np.int64)
    ty1 = np.clip(np.floor((v + r) / TILE), 0, n_tiles_y - 1).astype(np.int64)

    span_h = ty1 - ty0 + 1
    rows_g = np.repeat(np.arange(len(p), dtype=np.int64), span_h)
    rows_ty = np.repeat(ty0, span_h) + _ragged_arange(span_h)
    span_w = (tx1 - tx0 + 1)[rows_g]
    pair_g = np.repeat(rows_g, span_w)
    pair_ty = np.repeat(rows_ty, span_w)
    pair_tx = np.repeat(tx0[rows_g], span_w) + _ragged_arange(span_w)
    tile_id = pair_ty * n_tiles_x + pair_tx

    order = np.argsort(tile_id, kind="stable")
    pair_src = pair_g[order].astype(np.int32)
    tile_sorted = tile_id[order]
    tile_offsets = np.searchsorted(
        tile_sorted, np.arange(n_tiles_x * n_tiles_y + 1, dtype=np.int64)
    ).astype(np.int64)
    return pair_src, tile_offsets, n_tiles_x, n_tiles_y


def _ragged_arange(counts: np.ndarray) -> np.ndarray:
    total = int(counts.sum())
    starts = np.cumsum(counts) - counts
    return np.arange(total, dtype=np.int64) - np.repeat(starts, counts)


@njit(cache=True, parallel=True)
def _composite_tiles(
    width,
    height,
    n_tiles_x,
    n_tiles_y,
    pair_src,
    tile_offsets,
    mean2d,
    conic,
    opacity,
    splat_color,
    field_index,
    background,
    want_color,
    color_out,
    alpha_out,
    contributor_out,
    weight_out,
):
    n_tiles = n_tiles_x * n_tiles_y
    for t in prange(n_tiles):
        ty = t // n_tiles_x
        tx = t - ty * n_tiles_x
        y0 = ty * TILE
        x0 = tx * TILE
        y1 = min(y0 + TILE, height)
        x1 = min(x0 + TILE, width)
        lo = tile_offsets[t]
        hi = tile_offsets[t + 1]
        for py in range(y0, y1):
            cy = py + 0.5
            for px in range(x0, x1):
                cx = px + 0.5
                trans = 1.0
                red = 0.0
                green = 0.0
                blue = 0.0
                best_w = 0.0
                best_idx = -1
                for k in range(lo, hi):
                    s = pair_src[k]
                    dx = cx - mean2d[s, 0]
                    dy = cy - mean2d[s, 1]
                    power = -0.5 * (conic[s, 0] * dx * dx + conic[s, 2] * dy * dy) - conic[s, 1] * dx * dy
                    if power > 0.0:
                        continue
                    alpha = opacity[s] * np.exp(power)
                    if alpha > ALPHA_CLAMP:
                        alpha = ALPHA_CLAMP
                    if alpha < ALPHA_SKIP:
                        continue
                    w = alpha * trans
                    if want_color:
                        red += w * splat_color[s, 0]
                        green += w * splat_color[s, 1]
                        blue += w * splat_color[s, 2]
                    if w > best_w:
                        best_w = w
                        best_idx = field_index[s]
                    trans *= 1.0 - alpha
                    if trans < T_STOP:
                        break
                if want_color:
                    color_out[py, px, 0] = red + trans * background[0]
                    color_out[py, px, 1] = green + trans * background[1]
                    color_out[py, px, 2] = blue + trans * background[2]
                alpha_out[py, px] = 1.0 - trans
                contributor_out[py, px] = best_idx
                weight_out[py, px] = best_w


def save_color_png(buffers: RenderBuffers, path: str | os.PathLike) -> None:
    """Write the color buffer as an 8-bit RGB PNG."""
    if buffers.color is None:
        raise PreconditionError("render has no color buffer (contributor-only mode)")
    img = np.clip(np.rint(buffers.color * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def save_contributor_dump(buffers: RenderBuffers, path: str | os.PathLike) -> None:
    """Write the contributor grid as a binary debug dump.

    Layout: 16-byte header (magic ``LBGB``, u32 version, u32 width, u32
    height), then max_contributor as int32 and max_weight as float32, both
    row-major little-endian.
    """
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<III", DUMP_VERSION, buffers.width, buffers.height))
        fh.write(buffers.max_contributor.astype("<i4").tobytes())
        fh.write(buffers.max_weight.astype("<f4").tobytes())


def load_contributor_dump(path: str | os.PathLike) -> RenderBuffers:
    """Read a contributor debug dump back into (color-less) buffers."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise TruncationError(f"{path}: file shorter than the 16-byte dump header")
    if data[:4] != DUMP_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {DUMP_MAGIC!r}")
    version, width, height = struct.unpack_from("<III", data, 4)
    if version != DUMP_VERSION:
        raise FormatError(f"{path}: unsupported dump version {version}")
    count = width * height
    need = 16 + count * 8
    if len(data) < need:
        raise TruncationError(f"{path}: payload truncated, expected {need} bytes, got {len(data)}")
    contributor = np.frombuffer(data, dtype="<i4", count=count, offset=16).reshape(height, width)
    weight = np.frombuffer(data, dtype="<f4", count=count, offset=16 + count * 4).reshape(height, width)
    alpha = np.zeros((height, width), dtype=np.float32)
    return RenderBuffers(
        color=None,
        alpha=alpha,
        max_contributor=contributor.copy(),
        max_weight=weight.copy(),
    )
