"""Incremental merging of per-frame fragments into persistent 3D objects.

A fragment joins an existing object when they share enough Gaussians and
look alike semantically; otherwise it founds a new object. Because one
fragment can bridge several over-segmented objects at once, every candidate
that passes both thresholds is folded into the winner, which keeps merging
with zeroed thresholds exactly equivalent to connected components over
shared Gaussians.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from gslift.errors import IntegrityError, PreconditionError
from gslift.lifting import Fragment, FragmentSet, lift_frame, subsample_fragments

log = logging.getLogger(__name__)


@dataclass
class MergeConfig:
    """Thresholds and weights for fragment-object association.

    ``tau_geom`` gates the shared-Gaussian fraction, ``tau_sem`` the feature
    similarity, and ``lambda_sem`` weights similarity against overlap in the
    combined score. ``printed_semantic`` switches the similarity mapping from
    (1 + cos) / 2 to cos / 2 for fidelity experiments; its range is then
    [-1/2, 1/2], so ``tau_sem`` usually needs lowering alongside it.
    """

    tau_geom: float = 0.1
    tau_sem: float = 0.75
    lambda_sem: float = 1.0
    printed_semantic: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau_geom <= 1.0:
            raise PreconditionError(f"tau_geom must be in [0, 1], got {self.tau_geom}")
        if not 0.0 <= self.tau_sem <= 1.0:
            raise PreconditionError(f"tau_sem must be in [0, 1], got {self.tau_sem}")
        if self.lambda_sem < 0.0:
            raise PreconditionError(f"lambda_sem must be non-negative, got {self.lambda_sem}")


@dataclass
class SceneObject:
    """A persistent object: its Gaussians, running feature, and lineage."""

    object_id: int
    gaussians: set
    feature: np.ndarray
    fragment_count: int = 1
    parent_id: int | None = None

    def __len__(self) -> int:
        return len(self.gaussians)


class ObjectMap:
    """All objects of one segmentation level over a fixed field.

    ``owner[i]`` is the object id owning Gaussian i (0 when unowned); it is
    kept consistent with every object's member set after each operation.
    """

    def __init__(self, level: str, n_gaussians: int):
        self.level = level
        self.owner = np.zeros(n_gaussians, dtype=np.int64)
        self.objects: dict[int, SceneObject] = {}
        self._next_id = 1

    def __len__(self) -> int:
        return len(self.objects)

    @property
    def n_gaussians(self) -> int:
        return self.owner.shape[0]

    def allocate_id(self) -> int:
        oid = self._next_id
        self._next_id += 1
        return oid

    def labels(self) -> np.ndarray:
        """Per-Gaussian object ids as uint32 (0 = unlabeled)."""
        return self.owner.astype(np.uint32)

    def labeled_count(self) -> int:
        return int(np.count_nonzero(self.owner))

    def drop_gaussians(self, indices: np.ndarray) -> None:
        """Unlabel the given Gaussians everywhere, deleting emptied objects."""
        indices = np.asarray(indices, dtype=np.int64)
        touched = np.unique(self.owner[indices])
        for oid in touched:
            if oid <= 0:
                continue
            obj = self.objects[int(oid)]
            obj.gaussians -= set(int(i) for i in indices)
            if not obj.gaussians:
                del self.objects[int(oid)]
        self.owner[indices] = 0

    def check_consistency(self) -> None:
        """Verify owner array and member sets agree (used by tests)."""
        seen = np.zeros_like(self.owner)
        for oid, obj in self.objects.items():
            if not obj.gaussians:
                raise IntegrityError(f"object {oid} has no Gaussians")
            members = np.fromiter(obj.gaussians, dtype=np.int64)
            if np.any(self.owner[members] != oid):
                raise IntegrityError(f"object {oid} disagrees with the owner array")
            seen[members] = oid
        if not np.array_equal(seen, self.owner):
            raise IntegrityError("owner array names Gaussians no object contains")


def geom_overlap(current, previous) -> float:
    """Fraction of the current set already inside the previous set."""
    cur = np.asarray(sorted(current), dtype=np.int64)
    prev = np.asarray(sorted(previous), dtype=np.int64)
    if cur.size == 0:
        raise PreconditionError("geometric overlap is undefined for an empty current set")
    shared = np.intersect1d(cur, prev, assume_unique=True).size
    return shared / cur.size


def sem_similarity(f_a: np.ndarray, f_b: np.ndarray, printed: bool = False) -> float:
    """Cosine similarity mapped to [0, 1] (or the raw cos / 2 variant)."""
    f_a = np.asarray(f_a, dtype=np.float64)
    f_b = np.asarray(f_b, dtype=np.float64)
    if f_a.shape != f_b.shape:
        raise PreconditionError(f"feature shapes differ: {f_a.shape} vs {f_b.shape}")
    for name, vec in (("first", f_a), ("second", f_b)):
        norm = np.linalg.norm(vec)
        if abs(norm - 1.0) > 1e-4:
            raise PreconditionError(
                f"{name} feature is not unit-norm (|f| = {norm:.6g}); "
                "semantic similarity requires normalized features"
            )
    cos = float(np.clip(np.dot(f_a, f_b), -1.0, 1.0))
    return 0.5 * cos if printed else 0.5 * (1.0 + cos)


def update_feature(f_prev: np.ndarray, n: int, f_new: np.ndarray) -> np.ndarray:
    """Running mean over n previous fragments plus one new one, renormalized."""
    if n < 1:
        raise PreconditionError(f"fragment count must be at least 1, got {n}")
    return _normalized_mix(np.asarray(f_prev, np.float64), float(n),
                           np.asarray(f_new, np.float64), 1.0)


def combine_features(f_a: np.ndarray, n_a: int, f_b: np.ndarray, n_b: int) -> np.ndarray:
    """Fragment-count-weighted feature average for whole-object absorption."""
    if n_a < 1 or n_b < 1:
        raise PreconditionError("fragment counts must be at least 1")
    return _normalized_mix(np.asarray(f_a, np.float64), float(n_a),
                           np.asarray(f_b, np.float64), float(n_b))


def _normalized_mix(f_a, w_a, f_b, w_b):
    mixed = (w_a * f_a + w_b * f_b) / (w_a + w_b)
    norm = np.linalg.norm(mixed)
    if norm < 1e-12:
        log.warning(
            "feature average cancelled to zero norm; keeping the previous feature"
        )
        return f_a.copy()
    return mixed / norm


def merge_frame(omap: ObjectMap, fragset: FragmentSet, config: MergeConfig) -> ObjectMap:
    """Fold one frame's fragments into the object map, largest first.

    Each fragment merges into the candidate maximizing overlap +
    lambda_sem * similarity among candidates passing both thresholds (ties
    to the lower object id); the remaining eligible candidates are absorbed
    into the same target. Without an eligible candidate the fragment founds
    a new object. Gaussians claimed from non-eligible objects move to the
    fragment's object; objects emptied that way are deleted.
    """
    order = sorted(fragset, key=lambda f: (-f.pixel_count, f.mask_id))
    for frag in order:
        g = frag.gaussians
        if g.size and int(g.max()) >= omap.n_gaussians:
            raise PreconditionError(
                f"fragment for mask {frag.mask_id} names Gaussian {int(g.max())} "
                f"outside the field of {omap.n_gaussians}"
            )
        owners = omap.owner[g]
        cand_ids, counts = np.unique(owners[owners > 0], return_counts=True)
        target_id = None
        if cand_ids.size:
            overlap = counts / g.size
            sims = np.array(
                [
                    sem_similarity(frag.feature, omap.objects[int(c)].feature,
                                   config.printed_semantic)
                    for c in cand_ids
                ]
            )
            eligible = (overlap >= config.tau_geom) & (sims >= config.tau_sem)
            if eligible.any():
                scores = np.where(eligible, overlap + config.lambda_sem * sims, -np.inf)
                target_id = int(cand_ids[int(np.argmax(scores))])
                target = omap.objects[target_id]
                for cid in cand_ids[eligible]:
                    cid = int(cid)
                    if cid == target_id:
                        continue
                    other = omap.objects.pop(cid)
                    members = np.fromiter(other.gaussians, dtype=np.int64)
                    omap.owner[members] = target_id
                    target.feature = combine_features(
                        target.feature, target.fragment_count,
                        other.feature, other.fragment_count,
                    )
                    target.fragment_count += other.fragment_count
                    target.gaussians |= other.gaussians

        if target_id is None:
            target_id = omap.allocate_id()
            target = SceneObject(
                object_id=target_id,
                gaussians=set(),
                feature=frag.feature.copy(),
                fragment_count=1,
            )
            omap.objects[target_id] = target
        else:
            target = omap.objects[target_id]
            target.feature = update_feature(target.feature, target.fragment_count, frag.feature)
            target.fragment_count += 1

        owners = omap.owner[g]
        for loser in np.unique(owners[(owners > 0) & (owners != target_id)]):
            loser = int(loser)
            stolen = g[owners == loser]
            obj = omap.objects[loser]
            obj.gaussians -= set(int(i) for i in stolen)
            if not obj.gaussians:
                del omap.objects[loser]
        omap.owner[g] = target_id
        target.gaussians |= set(int(i) for i in g)
    return omap


def hierarchical_decompose(
    parent_map: ObjectMap,
    frame_stream,
    level: str,
    config: MergeConfig,
    min_pixels: int,
    min_gaussians: int,
    subsample: float = 1.0,
    rng: np.random.Generator | None = None,
):
    """Build a child level constrained to live inside the parent level.

    ``frame_stream`` yields (frame_id, buffers, mask, features) tuples. Each
    lifted fragment is restricted to its plurality parent object (ties to the
    lower parent id) before merging, so every child set is a subset of
    exactly one parent set. Returns (child_map, diagnostics).
    """
    child = ObjectMap(level, parent_map.n_gaussians)
    dropped_unparented = 0
    if subsample < 1.0 and rng is None:
        rng = np.random.default_rng(0)
    for frame_id, buffers, mask, features in frame_stream:
        fragset = lift_frame(
            buffers, mask, features,
            frame_id=frame_id, level=level,
            min_pixels=min_pixels, min_gaussians=min_gaussians,
        )
        refined = []
        for frag in fragset:
            parents = parent_map.owner[frag.gaussians]
            labeled = parents > 0
            if not labeled.any():
                dropped_unparented += 1
                continue
            ids, counts = np.unique(parents[labeled], return_counts=True)
            winner = int(ids[int(np.argmax(counts))])
            members = frag.gaussians[parents == winner]
            refined.append(
                Fragment(
                    frame_id=frag.frame_id,
                    level=level,
                    mask_id=frag.mask_id,
                    gaussians=members,
                    feature=frag.feature,
                    pixel_count=frag.pixel_count,
                )
            )
        refined_set = FragmentSet(frame_id=frame_id, level=level, fragments=refined)
        if subsample < 1.0:
            refined_set = subsample_fragments(refined_set, subsample, rng)
        merge_frame(child, refined_set, config)
        for obj in child.objects.values():
            if obj.parent_id is None:
                member = next(iter(obj.gaussians))
                obj.parent_id = int(parent_map.owner[member])
    return child, {"fragments_without_parent": dropped_unparented}


def validate_hierarchy(child: ObjectMap, parent: ObjectMap) -> None:
    """Assert every child object sits inside one parent object."""
    for oid, obj in child.objects.items():
        members = np.fromiter(obj.gaussians, dtype=np.int64)
        parents = np.unique(parent.owner[members])
        if parents.size != 1 or parents[0] <= 0:
            raise IntegrityError(
                f"{child.level} {oid} spans parent objects {parents.tolist()}"
            )
        if obj.parent_id is not None and int(parents[0]) != obj.parent_id:
            raise IntegrityError(
                f"{child.level} {oid} records parent {obj.parent_id} "
                f"but its Gaussians live in parent {int(parents[0])}"
            )
