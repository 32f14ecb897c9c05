"""Segmentation quality evaluation: metrics, render rig, matching protocol."""

from gslift.evaluation.metrics import (
    PSNR_CAP,
    iou,
    match_masks_by_iou,
    mean_iou,
    mse,
    psnr,
    ssim,
)
from gslift.evaluation.hemisphere import (
    HemisphereRig,
    hemisphere_cameras,
    render_hemisphere,
    rig_for_object,
)
from gslift.evaluation.protocol import (
    MetricReport,
    ObjectMatch,
    evaluate_labels,
    match_objects_by_mse,
)

__all__ = [
    "PSNR_CAP",
    "mse",
    "psnr",
    "ssim",
    "iou",
    "match_masks_by_iou",
    "mean_iou",
    "HemisphereRig",
    "rig_for_object",
    "hemisphere_cameras",
    "render_hemisphere",
    "ObjectMatch",
    "MetricReport",
    "match_objects_by_mse",
    "evaluate_labels",
]
