"""Object matching and the full segmentation evaluation protocol."""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from gslift.errors import PreconditionError
from gslift.evaluation.hemisphere import render_hemisphere, rig_for_object
from gslift.evaluation.metrics import iou, mean_iou, psnr, ssim
from gslift.io.gaussian_field import GaussianField
from gslift.io.labels import LEVELS, LabelStore
from gslift.raster.projection import project_gaussians, sort_by_depth
from gslift.raster.render import render_frame


@dataclass
class ObjectMatch:
    """One ground-truth object paired with its best predicted object.

    ``pred_id`` is None when no prediction was left to match; ``mse`` is the
    mean squared error between the binary silhouettes over the match views.
    """

    gt_id: int
    pred_id: int | None
    mse: float


@dataclass
class MetricReport:
    """Evaluation summary: per-object scores plus scene-level aggregates.

    ``lpips`` is reserved for a learned perceptual metric and always None;
    no pretrained backbone ships with this package.
    """

    matches: list
    per_object: list
    psnr_mean: float
    ssim_mean: float
    miou: dict
    lpips: float | None = None

    def to_dict(self) -> dict:
        return {
            "per_object": self.per_object,
            "psnr_mean": self.psnr_mean,
            "ssim_mean": self.ssim_mean,
            "miou": self.miou,
            "lpips": self.lpips,
        }


def match_objects_by_mse(
    gt_sets: dict,
    pred_sets: dict,
    field: GaussianField,
    frames: list,
    background=(1.0, 1.0, 1.0),
) -> list:
    """Greedy one-to-one matching by ascending silhouette MSE.

    Every object is rendered as a binary alpha mask (alpha > 0.5) in each
    frame; pairs are matched best-first until either side runs out.
    Unmatched ground-truth objects are scored against an empty silhouette.
    """
    if not gt_sets:
        raise PreconditionError("no ground-truth objects to match")
    if not frames:
        raise PreconditionError("object matching needs at least one frame")

    gt_ids = sorted(gt_sets)
    pred_ids = sorted(pred_sets)
    gt_masks = {g: [] for g in gt_ids}
    pred_masks = {p: [] for p in pred_ids}
    for frame in frames:
        projected = sort_by_depth(project_gaussians(field, frame))
        for g in gt_ids:
            buf = render_frame(
                projected, frame.width, frame.height,
                mode="contributor", background=background, subset=gt_sets[g],
            )
            gt_masks[g].append(buf.alpha > 0.5)
        for p in pred_ids:
            buf = render_frame(
                projected, frame.width, frame.height,
                mode="contributor", background=background, subset=pred_sets[p],
            )
            pred_masks[p].append(buf.alpha > 0.5)

    def pair_mse(a_masks, b_masks) -> float:
        total = 0.0
        for a, b in zip(a_masks, b_masks):
            total += float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
        return total / len(a_masks)

    candidates = sorted(
        (
            (pair_mse(gt_masks[g], pred_masks[p]), g, p)
            for g in gt_ids
            for p in pred_ids
        ),
        key=lambda t: (t[0], t[1], t[2]),
    )
    used_gt, used_pred = set(), set()
    matches = []
    for err, g, p in candidates:
        if g in used_gt or p in used_pred:
            continue
        used_gt.add(g)
        used_pred.add(p)
        matches.append(ObjectMatch(gt_id=g, pred_id=p, mse=err))
    for g in gt_ids:
        if g not in used_gt:
            empty = [np.zeros_like(m) for m in gt_masks[g]]
            matches.append(ObjectMatch(gt_id=g, pred_id=None, mse=pair_mse(gt_masks[g], empty)))
    matches.sort(key=lambda m: m.gt_id)
    return matches


def evaluate_labels(
    field: GaussianField,
    frames: list,
    gt_store: LabelStore,
    pred_store: LabelStore,
    miou_levels=("object",),
    hemisphere_views: int = 50,
    hemisphere_size: int = 128,
) -> MetricReport:
    """Score a predicted label store against ground-truth labels.

    Objects are matched by silhouette MSE over the given frames, then each
    matched pair is re-rendered from a shared hemisphere rig (white
    background) for PSNR/SSIM. Mask mIoU compares, per frame and per
    ground-truth instance, against the best predicted instance across all
    levels.
    """
    if len(gt_store) != len(field) or len(pred_store) != len(field):
        raise PreconditionError(
            "label stores must cover the evaluated field "
            f"({len(gt_store)} and {len(pred_store)} labels for {len(field)} Gaussians)"
        )
    gt_sets = gt_store.instance_sets("object")
    pred_sets = pred_store.instance_sets("object")
    if not gt_sets:
        raise PreconditionError("ground-truth store labels no objects")

    matches = match_objects_by_mse(gt_sets, pred_sets, field, frames)

    per_object = []
    psnr_values, ssim_values = [], []
    for match in matches:
        rig = rig_for_object(
            field, gt_sets[match.gt_id],
            view_count=hemisphere_views, width=hemisphere_size, height=hemisphere_size,
        )
        gt_views = render_hemisphere(field, gt_sets[match.gt_id], rig=rig)
        if match.pred_id is not None:
            pred_views = render_hemisphere(field, pred_sets[match.pred_id], rig=rig)
            pred_images = [b.color for b in pred_views]
        else:
            pred_images = [np.ones_like(b.color) for b in gt_views]
        view_psnr = [psnr(g.color, p) for g, p in zip(gt_views, pred_images)]
        view_ssim = [ssim(g.color, p) for g, p in zip(gt_views, pred_images)]
        record = {
            "gt_id": match.gt_id,
            "pred_id": match.pred_id,
            "mse": match.mse,
            "psnr": float(np.mean(view_psnr)),
            "ssim": float(np.mean(view_ssim)),
        }
        per_object.append(record)
        psnr_values.append(record["psnr"])
        ssim_values.append(record["ssim"])

    miou = _mask_miou(field, frames, gt_store, pred_store, miou_levels)

    return MetricReport(
        matches=matches,
        per_object=per_object,
        psnr_mean=float(np.mean(psnr_values)),
        ssim_mean=float(np.mean(ssim_values)),
        miou=miou,
    )


def _mask_miou(field, frames, gt_store, pred_store, levels) -> dict:
    for level in levels:
        if level not in LEVELS:
            raise PreconditionError(f"unknown level '{level}', expected one of {LEVELS}")
    per_level_values = {level: [] for level in levels}
    for frame in frames:
        projected = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(projected, frame.width, frame.height, mode="contributor")
        mc = buf.max_contributor
        valid = mc >= 0
        pred_candidates = []
        for level in LEVELS:
            labels = pred_store.labels_for(level)
            if not labels.any():
                continue
            grid = np.zeros(mc.shape, dtype=np.int64)
            grid[valid] = labels[mc[valid]]
            for pid in np.unique(grid):
                if pid > 0:
                    pred_candidates.append(grid == pid)
        for level in levels:
            labels = gt_store.labels_for(level)
            grid = np.zeros(mc.shape, dtype=np.int64)
            grid[valid] = labels[mc[valid]]
            for gid in np.unique(grid):
                if gid <= 0:
                    continue
                gt_mask = grid == gid
                best = 0.0
                for cand in pred_candidates:
                    value = iou(gt_mask, cand)
                    if value > best:
                        best = value
                per_level_values[level].append(best)
    return {
        level: (mean_iou(values) if values else 0.0)
        for level, values in per_level_values.items()
    }
