"""Geometric cleanup of merged objects: outliers, floaters, stray components."""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from gslift.errors import PreconditionError
from gslift.io.gaussian_field import GaussianField
from gslift.merging import ObjectMap, SceneObject
from gslift.raster.stats import ViewStats

log = logging.getLogger(__name__)

DEFAULT_KNN = 16
DEFAULT_STD_RATIO = 2.0
DEFAULT_SALIENT_FRACTION = 0.1
DEFAULT_MIN_OVERLAP = 0.5
SPLIT_RADIUS_SCALE = 3.0


def remove_outliers(
    obj: SceneObject,
    field: GaussianField,
    k: int = DEFAULT_KNN,
    std_ratio: float = DEFAULT_STD_RATIO,
) -> SceneObject:
    """Drop members whose mean k-nearest-neighbor distance is anomalous.

    A member is removed when its mean distance to its k nearest co-members
    exceeds mean + std_ratio * std over the object. Objects with at most k
    members are returned unchanged.
    """
    if k < 1:
        raise PreconditionError(f"k must be at least 1, got {k}")
    if std_ratio < 0:
        raise PreconditionError(f"std_ratio must be non-negative, got {std_ratio}")
    members = np.fromiter(obj.gaussians, dtype=np.int64)
    members.sort()
    if members.size <= k:
        log.info(
            "object %d has %d members (<= k=%d); outlier removal skipped",
            obj.object_id, members.size, k,
        )
        return obj
    pos = field.positions[members].astype(np.float64)
    tree = cKDTree(pos)
    dists, _ = tree.query(pos, k=k + 1)
    mean_dist = dists[:, 1:].mean(axis=1)
    mu = mean_dist.mean()
    sigma = mean_dist.std()
    # Tiny relative slack so symmetric configurations where every distance is
    # equal up to float rounding never lose members to noise.
    threshold = mu + std_ratio * sigma + 1e-9 * max(mu, 1e-30)
    keep = mean_dist <= threshold
    if keep.all():
        return obj
    return SceneObject(
        object_id=obj.object_id,
        gaussians=set(int(i) for i in members[keep]),
        feature=obj.feature,
        fragment_count=obj.fragment_count,
        parent_id=obj.parent_id,
    )


def median_nn_distance(positions: np.ndarray) -> float:
    """Median distance from each point to its nearest other point."""
    if positions.shape[0] < 2:
        raise PreconditionError("need at least 2 points for a nearest-neighbor distance")
    tree = cKDTree(positions)
    dists, _ = tree.query(positions, k=2)
    return float(np.median(dists[:, 1]))


def split_radius(obj: SceneObject, field: GaussianField, scale: float = SPLIT_RADIUS_SCALE) -> float:
    """Connectivity radius for an object: scale times its median NN distance."""
    members = np.fromiter(obj.gaussians, dtype=np.int64)
    return scale * median_nn_distance(field.positions[members].astype(np.float64))


def split_components(
    obj: SceneObject,
    field: GaussianField,
    radius: float,
    salient_fraction: float = DEFAULT_SALIENT_FRACTION,
):
    """Partition an object into connected components at the given radius.

    Members within ``radius`` of each other are connected. Components
    holding at least ``salient_fraction`` of the object stay salient; the
    rest are residue. Returns (salient, residue) as lists of sorted index
    arrays, each list ordered by decreasing size (ties by smallest index).
    The returned arrays together partition the object's members exactly.
    """
    if radius <= 0:
        raise PreconditionError(f"radius must be positive, got {radius}")
    if not 0.0 <= salient_fraction <= 1.0:
        raise PreconditionError(
            f"salient_fraction must be in [0, 1], got {salient_fraction}"
        )
    members = np.fromiter(obj.gaussians, dtype=np.int64)
    members.sort()
    n = members.size
    pos = field.positions[members].astype(np.float64)
    tree = cKDTree(pos)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if pairs.size:
        data = np.ones(pairs.shape[0], dtype=np.int8)
        adj = coo_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
    else:
        labels = np.arange(n)

    groups = {}
    for local, comp in enumerate(labels):
        groups.setdefault(int(comp), []).append(local)
    comps = [members[np.asarray(idx, dtype=np.int64)] for idx in groups.values()]
    comps.sort(key=lambda c: (-c.size, int(c[0])))
    cutoff = salient_fraction * n
    salient = [c for c in comps if c.size >= cutoff]
    residue = [c for c in comps if c.size < cutoff]
    return salient, residue


def merge_residue(
    residue_clusters: list,
    omap: ObjectMap,
    field: GaussianField,
    max_distance: float,
    min_overlap: float = DEFAULT_MIN_OVERLAP,
) -> ObjectMap:
    """Attach stray clusters to nearby objects, or leave them unlabeled.

    Every cluster is scored against the labeling as it stood on entry: the
    candidate is the object minimizing the mean nearest-neighbor distance
    from cluster members to object members (ties to the lower id), accepted
    only if that distance is at most ``max_distance`` and at least
    ``min_overlap`` of the cluster's nearest labeled Gaussians belong to it.
    Salient objects are never shrunk by this operation.
    """
    if max_distance <= 0:
        raise PreconditionError(f"max_distance must be positive, got {max_distance}")
    if not 0.0 <= min_overlap <= 1.0:
        raise PreconditionError(f"min_overlap must be in [0, 1], got {min_overlap}")
    if not omap.objects:
        return omap

    object_ids = sorted(omap.objects)
    trees = {}
    for oid in object_ids:
        members = np.fromiter(omap.objects[oid].gaussians, dtype=np.int64)
        trees[oid] = cKDTree(field.positions[members].astype(np.float64))

    labeled = np.nonzero(omap.owner > 0)[0]
    labeled_tree = cKDTree(field.positions[labeled].astype(np.float64))
    labeled_owner = omap.owner[labeled]

    for cluster in residue_clusters:
        cluster = np.asarray(cluster, dtype=np.int64)
        if cluster.size == 0:
            continue
        pos = field.positions[cluster].astype(np.float64)
        best_id, best_mean = None, math.inf
        for oid in object_ids:
            mean_dist = float(trees[oid].query(pos)[0].mean())
            if mean_dist < best_mean:
                best_id, best_mean = oid, mean_dist
        if best_mean > max_distance:
            continue
        _, nearest = labeled_tree.query(pos)
        votes = labeled_owner[nearest]
        fraction = float(np.count_nonzero(votes == best_id)) / cluster.size
        if fraction < min_overlap:
            continue
        target = omap.objects[best_id]
        target.gaussians |= set(int(i) for i in cluster)
        omap.owner[cluster] = best_id
    return omap


def prune_low_consistency(
    field: GaussianField,
    stats: ViewStats,
    keep_fraction: float,
) -> np.ndarray:
    """Indices of Gaussians to keep after dropping view-inconsistent ones.

    Keeps ceil(keep_fraction * N) Gaussians. Pruning drains the pool of
    Gaussians seen from at most one view first (lowest consistency score
    first); only then does it touch multi-view Gaussians. keep_fraction = 1
    is the identity.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise PreconditionError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    n = len(field)
    if len(stats) != n:
        raise PreconditionError(
            f"stats cover {len(stats)} Gaussians but the field has {n}"
        )
    keep_count = math.ceil(keep_fraction * n)
    prune_count = n - keep_count
    if prune_count == 0:
        return np.arange(n, dtype=np.int64)
    scores = stats.consistency_scores()
    multi_view = (stats.view_count > 1).astype(np.int8)
    priority = np.lexsort((np.arange(n), scores, multi_view))
    pruned = priority[:prune_count]
    keep = np.ones(n, dtype=bool)
    keep[pruned] = False
    return np.nonzero(keep)[0].astype(np.int64)
