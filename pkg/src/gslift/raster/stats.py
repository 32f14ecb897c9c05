"""Per-Gaussian visibility statistics accumulated across rendered views."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gslift.errors import PreconditionError
from gslift.raster.render import RenderBuffers


@dataclass
class ViewStats:
    """How often, and how strongly, each Gaussian dominated a pixel.

    ``view_count[i]`` counts frames where Gaussian i was the max contributor
    of at least one pixel; ``opacity_contribution[i]`` sums its max-weight
    values over all pixels of all frames.
    """

    view_count: np.ndarray
    opacity_contribution: np.ndarray
    frames: int = 0

    @classmethod
    def zeros(cls, n_gaussians: int) -> "ViewStats":
        return cls(
            view_count=np.zeros(n_gaussians, dtype=np.int64),
            opacity_contribution=np.zeros(n_gaussians, dtype=np.float64),
            frames=0,
        )

    def __len__(self) -> int:
        return self.view_count.shape[0]

    def consistency_scores(self) -> np.ndarray:
        """Contribution damped by a log view-count multiplier.

        A Gaussian seen from a single view scores contribution * log(2);
        floaters that only dominate one view score low even when they
        dominate it strongly.
        """
        return self.opacity_contribution * np.log1p(self.view_count.astype(np.float64))


def accumulate_view_stats(stats: ViewStats, buffers: RenderBuffers) -> ViewStats:
    """Fold one frame's contributor grid into the running statistics."""
    mc = buffers.max_contributor
    valid = mc >= 0
    ids = mc[valid].astype(np.int64)
    if ids.size and ids.max() >= len(stats):
        raise PreconditionError(
            f"contributor id {int(ids.max())} out of range for stats over {len(stats)} Gaussians"
        )
    weights = buffers.max_weight[valid].astype(np.float64)
    stats.opacity_contribution += np.bincount(ids, weights=weights, minlength=len(stats))
    seen = np.unique(ids)
    stats.view_count[seen] += 1
    stats.frames += 1
    return stats


def merge_view_stats(a: ViewStats, b: ViewStats) -> ViewStats:
    """Combine statistics accumulated over disjoint frame sets."""
    if len(a) != len(b):
        raise PreconditionError(f"stats sizes differ: {len(a)} vs {len(b)}")
    return ViewStats(
        view_count=a.view_count + b.view_count,
        opacity_contribution=a.opacity_contribution + b.opacity_contribution,
        frames=a.frames + b.frames,
    )
