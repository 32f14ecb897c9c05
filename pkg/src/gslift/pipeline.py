"""End-to-end segmentation: render, lift, merge, postprocess, label.

The pipeline walks the manifest frames once per level, keeps contributor
buffers cached between levels, and finishes with an optional geometric
cleanup pass before writing the label sidecar.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from gslift.config import RunConfig
from gslift.errors import InputError
from gslift.io.gaussian_field import GaussianField
from gslift.io.labels import LabelStore, save_labels
from gslift.io.masks import load_mask_map
from gslift.io.features import load_features
from gslift.io.manifest import Frame
from gslift.io.ply import load_field
from gslift.lifting import lift_frame, subsample_fragments
from gslift.merging import (
    MergeConfig,
    ObjectMap,
    hierarchical_decompose,
    merge_frame,
)
from gslift.postprocess import (
    merge_residue,
    prune_low_consistency,
    remove_outliers,
    split_components,
    split_radius,
)
from gslift.raster.projection import ProjectedGaussians, project_gaussians, sort_by_depth
from gslift.raster.render import render_frame
from gslift.raster.stats import ViewStats, accumulate_view_stats

log = logging.getLogger(__name__)


@dataclass
class SegmentationRun:
    """Bookkeeping for one pipeline run: inputs, timings, and counters."""

    manifest_path: str
    field_path: str
    out_dir: str
    levels: tuple
    n_gaussians: int = 0
    n_frames: int = 0
    objects_per_level: dict = dataclass_field(default_factory=dict)
    labeled_per_level: dict = dataclass_field(default_factory=dict)
    timings: dict = dataclass_field(default_factory=dict)
    diagnostics: dict = dataclass_field(default_factory=dict)
    label_path: str = ""

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest_path,
            "field": self.field_path,
            "out_dir": self.out_dir,
            "levels": list(self.levels),
            "n_gaussians": self.n_gaussians,
            "n_frames": self.n_frames,
            "objects_per_level": self.objects_per_level,
            "labeled_per_level": self.labeled_per_level,
            "timings": self.timings,
            "diagnostics": self.diagnostics,
            "labels": self.label_path,
        }


class BufferProvider:
    """Renders contributor buffers per frame, optionally caching them.

    Ensures every frame is projected and composited exactly once when the
    hierarchy pass revisits frames.
    """

    def __init__(self, field: GaussianField, near: float, cache: bool):
        self.field = field
        self.near = near
        self.cache_enabled = cache
        self._cache: dict = {}

    def buffers(self, frame: Frame):
        if frame.frame_id in self._cache:
            return self._cache[frame.frame_id]
        projected = sort_by_depth(project_gaussians(self.field, frame, near=self.near))
        buf = render_frame(projected, frame.width, frame.height, mode="contributor")
        if self.cache_enabled:
            self._cache[frame.frame_id] = buf
        return buf


def set_threads(threads: int) -> int:
    """Clamp and apply the numba thread count; returns the effective value."""
    import numba

    effective = max(1, min(threads, numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(effective)
    return effective


def warm_up_renderer() -> None:
    """Compile the compositing kernel on a one-splat scene.

    Keeps JIT compilation out of any per-frame timing window.
    """
    p = ProjectedGaussians(
        index=np.array([0], dtype=np.int32),
        mean2d=np.array([[2.0, 2.0]]),
        cov2d=np.array([[[1.0, 0.0], [0.0, 1.0]]]),
        depth=np.array([1.0]),
        color=np.array([[0.5, 0.5, 0.5]]),
        opacity=np.array([0.9]),
        radius=np.array([3.0]),
    )
    render_frame(p, 4, 4)


def cmd_segment(config: RunConfig) -> tuple[LabelStore, SegmentationRun]:
    """Segment a field into hierarchical objects and write the label sidecar.

    Returns the label store and a run record with stage timings
    (preprocessing, lifting_merging, postprocessing) and diagnostics.
    """
    config.validate()
    levels = config.normalized_levels()

    t_start = time.perf_counter()
    manifest, field_path = config.resolve_manifest()
    frames = manifest.frames
    if not frames:
        raise InputError(f"{config.manifest}: manifest has no frames to segment")
    field = load_field(field_path)
    effective_threads = set_threads(config.threads)
    warm_up_renderer()
    os.makedirs(config.out_dir, exist_ok=True)

    run = SegmentationRun(
        manifest_path=os.path.abspath(config.manifest),
        field_path=os.path.abspath(field_path),
        out_dir=os.path.abspath(config.out_dir),
        levels=levels,
        n_gaussians=len(field),
        n_frames=len(frames),
    )
    run.diagnostics["threads"] = effective_threads
    preprocessing = time.perf_counter() - t_start

    t_lift = time.perf_counter()
    provider = BufferProvider(field, config.near, cache=config.cache_buffers and len(levels) > 1)
    merge_config = config.merge_config()
    rng = np.random.default_rng(config.seed)
    stats = ViewStats.zeros(len(field))

    object_map = ObjectMap("object", len(field))
    for frame in frames:
        buf = provider.buffers(frame)
        accumulate_view_stats(stats, buf)
        mask = load_mask_map(frame.mask_paths["object"], expected_size=(frame.width, frame.height))
        features = load_features(frame.feature_paths["object"])
        fragset = lift_frame(
            buf, mask, features,
            frame_id=frame.frame_id, level="object",
            min_pixels=config.min_pixels, min_gaussians=config.min_gaussians,
        )
        fragset = subsample_fragments(fragset, config.fragment_subsample, rng)
        merge_frame(object_map, fragset, merge_config)

    maps = {"object": object_map}
    parent_of = {"part": "object", "subpart": "part"}
    for level in levels:
        if level == "object":
            continue

        def stream(level=level):
            for frame in frames:
                yield (
                    frame.frame_id,
                    provider.buffers(frame),
                    load_mask_map(frame.mask_paths[level], expected_size=(frame.width, frame.height)),
                    load_features(frame.feature_paths[level]),
                )

        child, diag = hierarchical_decompose(
            maps[parent_of[level]], stream(), level, merge_config,
            min_pixels=config.min_pixels, min_gaussians=config.min_gaussians,
            subsample=config.fragment_subsample, rng=rng,
        )
        maps[level] = child
        run.diagnostics[f"{level}_fragments_without_parent"] = diag["fragments_without_parent"]
    lifting_merging = time.perf_counter() - t_lift

    t_post = time.perf_counter()
    _apply_postprocess(config, field, stats, maps, levels, run)
    postprocessing = time.perf_counter() - t_post

    store = _build_label_store(field, maps, levels)
    label_path = os.path.join(config.out_dir, "labels.lbgl")
    save_labels(store, label_path)
    run.label_path = os.path.abspath(label_path)

    for level in levels:
        run.objects_per_level[level] = len(maps[level])
        run.labeled_per_level[level] = maps[level].labeled_count()
    run.timings = {
        "preprocessing": preprocessing,
        "lifting_merging": lifting_merging,
        "postprocessing": postprocessing,
        "total": time.perf_counter() - t_start,
    }
    return store, run


def _apply_postprocess(config, field, stats, maps, levels, run) -> None:
    if config.prune_floaters:
        kept = prune_low_consistency(field, stats, config.keep_fraction)
        mask = np.ones(len(field), dtype=bool)
        mask[kept] = False
        pruned = np.nonzero(mask)[0]
        for level in levels:
            maps[level].drop_gaussians(pruned)
        run.diagnostics["pruned_floaters"] = int(pruned.size)

    if config.remove_outliers:
        removed_total = 0
        for level in levels:
            omap = maps[level]
            for oid in sorted(omap.objects):
                obj = omap.objects[oid]
                cleaned = remove_outliers(obj, field, k=config.outlier_knn,
                                          std_ratio=config.outlier_std_ratio)
                if cleaned is obj:
                    continue
                removed = np.asarray(sorted(obj.gaussians - cleaned.gaussians), dtype=np.int64)
                omap.owner[removed] = 0
                omap.objects[oid] = cleaned
                removed_total += removed.size
        run.diagnostics["outliers_removed"] = removed_total

    if config.split_objects:
        splits = 0
        residue_rehomed = 0
        for level in levels:
            omap = maps[level]
            for oid in sorted(omap.objects):
                obj = omap.objects[oid]
                if len(obj) < 2:
                    continue
                radius = split_radius(obj, field, scale=config.split_radius_scale)
                salient, residue = split_components(obj, field, radius,
                                                    salient_fraction=config.salient_fraction)
                if len(salient) <= 1 and not residue:
                    continue
                if not salient:
                    # Everything fell below the salient cutoff; keep the
                    # largest component as the object rather than erasing it.
                    salient, residue = residue[:1], residue[1:]
                obj.gaussians = set(int(i) for i in salient[0])
                omap.owner[salient[0]] = oid
                for extra in salient[1:]:
                    new_id = omap.allocate_id()
                    omap.objects[new_id] = type(obj)(
                        object_id=new_id,
                        gaussians=set(int(i) for i in extra),
                        feature=obj.feature.copy(),
                        fragment_count=obj.fragment_count,
                        parent_id=obj.parent_id,
                    )
                    omap.owner[extra] = new_id
                    splits += 1
                for cluster in residue:
                    omap.owner[cluster] = 0
                if residue and config.merge_residue:
                    before = int(np.count_nonzero(omap.owner))
                    merge_residue(residue, omap, field, max_distance=radius,
                                  min_overlap=config.min_overlap)
                    residue_rehomed += int(np.count_nonzero(omap.owner)) - before
        run.diagnostics["components_split_off"] = splits
        if config.merge_residue:
            run.diagnostics["residue_rehomed"] = residue_rehomed

    _repair_hierarchy(maps, levels, run)


def _repair_hierarchy(maps, levels, run) -> None:
    """Re-nest child levels after postprocess edits to their parents."""
    repairs = 0
    for child_level, parent_level in (("part", "object"), ("subpart", "part")):
        if child_level not in maps:
            continue
        child, parent = maps[child_level], maps[parent_level]
        for oid in sorted(child.objects):
            obj = child.objects[oid]
            members = np.fromiter(obj.gaussians, dtype=np.int64)
            parents = parent.owner[members]
            labeled = parents > 0
            if not labeled.any():
                child.owner[members] = 0
                del child.objects[oid]
                repairs += 1
                continue
            ids, counts = np.unique(parents[labeled], return_counts=True)
            winner = int(ids[int(np.argmax(counts))])
            stray = members[parents != winner]
            if stray.size:
                child.owner[stray] = 0
                obj.gaussians -= set(int(i) for i in stray)
                repairs += 1
            obj.parent_id = winner
    if repairs:
        run.diagnostics["hierarchy_repairs"] = repairs


def _build_label_store(field, maps, levels) -> LabelStore:
    n = len(field)
    zeros = np.zeros(n, dtype=np.uint32)
    object_labels = maps["object"].labels() if "object" in maps else zeros.copy()
    part_labels = maps["part"].labels() if "part" in maps else zeros.copy()
    subpart_labels = maps["subpart"].labels() if "subpart" in maps else zeros.copy()
    part_parents = {}
    if "part" in maps:
        part_parents = {
            oid: int(obj.parent_id)
            for oid, obj in maps["part"].objects.items()
            if obj.parent_id
        }
    subpart_parents = {}
    if "subpart" in maps:
        subpart_parents = {
            oid: int(obj.parent_id)
            for oid, obj in maps["subpart"].objects.items()
            if obj.parent_id
        }
    return LabelStore(
        object_labels=object_labels,
        part_labels=part_labels,
        subpart_labels=subpart_labels,
        part_parents=part_parents,
        subpart_parents=subpart_parents,
    )
