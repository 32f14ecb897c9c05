"""Lifting 2D instance masks onto the Gaussians that dominate their pixels.

Each pixel proposes its max-contributor Gaussian to the mask instance
covering the pixel. A Gaussian claimed by several instances of the same
frame goes to the one backing it with the largest summed max-weight, so the
per-frame fragments always partition the claimed Gaussians.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from gslift.errors import DataError, IndexingError, PreconditionError
from gslift.io.features import FeatureTable
from gslift.io.masks import MaskMap
from gslift.raster.render import RenderBuffers

log = logging.getLogger(__name__)

DEFAULT_MIN_PIXELS = 25
DEFAULT_MIN_GAUSSIANS = 3


@dataclass
class Fragment:
    """One mask instance lifted into 3D for a single frame.

    ``gaussians`` is a sorted array of field indices that this instance won
    during arbitration; ``pixel_count`` counts the mask pixels that actually
    supported the lift (nonzero id and a valid max contributor).
    """

    frame_id: str
    level: str
    mask_id: int
    gaussians: np.ndarray
    feature: np.ndarray
    pixel_count: int

    def __post_init__(self) -> None:
        self.gaussians = np.asarray(self.gaussians, dtype=np.int64)
        if self.gaussians.size == 0:
            raise PreconditionError(
                f"fragment for mask {self.mask_id} has an empty Gaussian set"
            )
        self.feature = np.asarray(self.feature, dtype=np.float64)

    def __len__(self) -> int:
        return self.gaussians.shape[0]


@dataclass
class FragmentSet:
    """All fragments lifted from one frame at one level, sorted by mask id."""

    frame_id: str
    level: str
    fragments: list = field(default_factory=list)

    def __post_init__(self) -> None:
        total = sum(len(f) for f in self.fragments)
        if self.fragments:
            union = np.unique(np.concatenate([f.gaussians for f in self.fragments]))
            if union.size != total:
                raise PreconditionError(
                    f"fragments of frame '{self.frame_id}' share Gaussians; "
                    "per-frame fragments must be disjoint"
                )

    def __len__(self) -> int:
        return len(self.fragments)

    def __iter__(self):
        return iter(self.fragments)


def lift_frame(
    buffers: RenderBuffers,
    mask: MaskMap,
    features: FeatureTable,
    frame_id: str = "",
    level: str = "object",
    min_pixels: int = DEFAULT_MIN_PIXELS,
    min_gaussians: int = DEFAULT_MIN_GAUSSIANS,
) -> FragmentSet:
    """Lift one frame's instance mask onto max-contributor Gaussians.

    Fragments smaller than ``min_pixels`` supporting pixels or
    ``min_gaussians`` Gaussians are dropped. Mask ids beyond the feature
    table raise :class:`IndexingError`; a mask sized differently from the
    render buffers raises :class:`DataError`.
    """
    ids = mask.ids
    if ids.shape != buffers.max_contributor.shape:
        raise DataError(
            f"mask size {ids.shape[1]}x{ids.shape[0]} does not match render "
            f"buffers {buffers.width}x{buffers.height}"
        )
    max_id = mask.max_id
    if max_id > len(features):
        raise IndexingError(
            f"mask id {max_id} exceeds the feature table ({len(features)} rows)"
        )

    mc = buffers.max_contributor
    valid = (ids > 0) & (mc >= 0)
    gauss = mc[valid].astype(np.int64)
    mask_of = ids[valid].astype(np.int64)
    weight = buffers.max_weight[valid].astype(np.float64)

    # Pixels that support each mask id (denominator for the size floor).
    support = np.bincount(mask_of, minlength=max_id + 1)

    fragments = []
    if gauss.size:
        # Sum each (gaussian, mask) pair's max-weight, then let every gaussian
        # pick the mask with the largest sum; ties go to the lower mask id.
        key = gauss * (max_id + 1) + mask_of
        uniq, inverse = np.unique(key, return_inverse=True)
        pair_weight = np.bincount(inverse, weights=weight)
        pair_gauss = uniq // (max_id + 1)
        pair_mask = uniq % (max_id + 1)
        order = np.lexsort((pair_mask, -pair_weight, pair_gauss))
        g_sorted = pair_gauss[order]
        first = np.ones(g_sorted.size, dtype=bool)
        first[1:] = g_sorted[1:] != g_sorted[:-1]
        won_gauss = g_sorted[first]
        won_mask = pair_mask[order][first]

        by_mask = np.lexsort((won_gauss, won_mask))
        wm = won_mask[by_mask]
        wg = won_gauss[by_mask]
        boundaries = np.nonzero(np.diff(wm))[0] + 1
        for chunk in np.split(np.arange(wm.size), boundaries):
            if chunk.size == 0:
                continue
            mask_id = int(wm[chunk[0]])
            members = wg[chunk]
            if members.size < min_gaussians or support[mask_id] < min_pixels:
                continue
            fragments.append(
                Fragment(
                    frame_id=frame_id,
                    level=level,
                    mask_id=mask_id,
                    gaussians=members,
                    feature=features.feature_for(mask_id).copy(),
                    pixel_count=int(support[mask_id]),
                )
            )
    return FragmentSet(frame_id=frame_id, level=level, fragments=fragments)


def subsample_fragments(fragset: FragmentSet, fraction: float, rng: np.random.Generator) -> FragmentSet:
    """Keep a random fraction of each fragment's Gaussians (at least one).

    Draws from ``rng`` in fragment order, so results are reproducible for a
    fixed seed regardless of thread count.
    """
    if not 0.0 < fraction <= 1.0:
        raise PreconditionError(f"subsample fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return fragset
    kept = []
    for frag in fragset:
        k = max(1, int(round(fraction * len(frag))))
        chosen = rng.choice(frag.gaussians, size=k, replace=False)
        kept.append(
            Fragment(
                frame_id=frag.frame_id,
                level=frag.level,
                mask_id=frag.mask_id,
                gaussians=np.sort(chosen),
                feature=frag.feature,
                pixel_count=frag.pixel_count,
            )
        )
    return FragmentSet(frame_id=fragset.frame_id, level=fragset.level, fragments=kept)


class DenseFeatureAccumulator:
    """Running per-Gaussian mean of dense per-pixel feature maps.

    Every valid pixel routes its feature vector to its max-contributor
    Gaussian; the mean over all received vectors is the Gaussian's lifted
    feature. Gaussians that never dominate a pixel keep a zero vector.
    """

    def __init__(self, n_gaussians: int, dimension: int):
        if n_gaussians < 0 or dimension <= 0:
            raise PreconditionError(
                f"invalid accumulator shape ({n_gaussians}, {dimension})"
            )
        self.sums = np.zeros((n_gaussians, dimension), dtype=np.float64)
        self.counts = np.zeros(n_gaussians, dtype=np.int64)

    def add_frame(self, buffers: RenderBuffers, dense: np.ndarray) -> None:
        lift_features(buffers, dense, self.sums, self.counts)

    def means(self) -> np.ndarray:
        """Per-Gaussian mean features; zero rows where nothing accumulated."""
        denom = np.maximum(self.counts, 1).astype(np.float64)
        return self.sums / denom[:, None]


def lift_features(
    buffers: RenderBuffers,
    dense: np.ndarray,
    sums: np.ndarray,
    counts: np.ndarray,
) -> None:
    """Accumulate a (H, W, D) dense feature map onto max-contributor Gaussians."""
    mc = buffers.max_contributor
    if dense.ndim != 3 or dense.shape[:2] != mc.shape:
        raise DataError(
            f"dense feature map shape {dense.shape} does not match buffers "
            f"{buffers.height}x{buffers.width}"
        )
    if dense.shape[2] != sums.shape[1]:
        raise DataError(
            f"feature dimension {dense.shape[2]} does not match accumulator {sums.shape[1]}"
        )
    bad = ~np.isfinite(dense).all(axis=2)
    if bad.any():
        py, px = np.nonzero(bad)
        raise DataError(f"non-finite feature value at pixel (row {py[0]}, col {px[0]})")
    valid = mc >= 0
    ids = mc[valid].astype(np.int64)
    if ids.size and ids.max() >= sums.shape[0]:
        raise IndexingError(
            f"contributor id {int(ids.max())} out of range for accumulator over "
            f"{sums.shape[0]} Gaussians"
        )
    np.add.at(sums, ids, dense[valid].astype(np.float64))
    np.add.at(counts, ids, 1)


def pca_project(features: np.ndarray, n_components: int):
    """Project feature rows onto their principal components.

    Returns (scores, components, explained_variance_ratio). Rows are centered
    first; components are ordered by decreasing variance. Used to compress
    high-dimensional dense features before lifting or plotting.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise PreconditionError(f"features must be 2-D, got shape {x.shape}")
    n, d = x.shape
    if not 1 <= n_components <= min(n, d):
        raise PreconditionError(
            f"n_components must be in [1, {min(n, d)}], got {n_components}"
        )
    centered = x - x.mean(axis=0, keepdims=True)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:n_components]
    # Sign convention: largest-magnitude entry of each component positive.
    for row in components:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    scores = centered @ components.T
    variance = singular**2
    total = variance.sum()
    ratio = variance[:n_components] / total if total > 0 else np.zeros(n_components)
    return scores, components, ratio
