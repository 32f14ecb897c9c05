"""Delimited reports and diagnostic figures for pipeline and evaluation runs."""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from gslift.evaluation.protocol import MetricReport
from gslift.pipeline import SegmentationRun


def write_run_json(run: SegmentationRun, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(run.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_timings_csv(run: SegmentationRun, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "seconds"])
        for stage in ("preprocessing", "lifting_merging", "postprocessing", "total"):
            writer.writerow([stage, f"{run.timings.get(stage, 0.0):.6f}"])


def write_objects_csv(store, path: str | os.PathLike) -> None:
    """One row per labeled instance: level, id, parent id, member count."""
    parent_maps = {"object": {}, "part": store.part_parents, "subpart": store.subpart_parents}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "object_id", "parent_id", "gaussians"])
        for level in ("object", "part", "subpart"):
            sets = store.instance_sets(level)
            parents = parent_maps[level]
            for oid in sorted(sets):
                writer.writerow([level, oid, parents.get(oid, ""), sets[oid].size])


def write_metrics_csv(report: MetricReport, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gt_id", "pred_id", "mse", "psnr", "ssim"])
        for rec in report.per_object:
            writer.writerow([
                rec["gt_id"],
                rec["pred_id"] if rec["pred_id"] is not None else "",
                f"{rec['mse']:.8f}", f"{rec['psnr']:.4f}", f"{rec['ssim']:.6f}",
            ])


def write_metrics_json(report: MetricReport, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def figure_timing_breakdown(run: SegmentationRun, path: str | os.PathLike) -> None:
    stages = ["preprocessing", "lifting_merging", "postprocessing"]
    seconds = [run.timings.get(s, 0.0) for s in stages]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(stages, seconds, color=["#4c72b0", "#dd8452", "#55a868"])
    ax.set_ylabel("seconds")
    ax.set_title("Stage timing breakdown")
    for i, v in enumerate(seconds):
        ax.text(i, v, f"{v:.2f}", ha="center", va="bottom", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def figure_object_counts(run: SegmentationRun, path: str | os.PathLike) -> None:
    levels = list(run.objects_per_level)
    counts = [run.objects_per_level[lv] for lv in levels]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(levels, counts, color="#4c72b0")
    ax.set_ylabel("objects")
    ax.set_title("Objects per level")
    for i, v in enumerate(counts):
        ax.text(i, v, str(v), ha="center", va="bottom", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def figure_object_sizes(store, path: str | os.PathLike) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    plotted = False
    for level in ("object", "part", "subpart"):
        sets = store.instance_sets(level)
        if not sets:
            continue
        sizes = [members.size for members in sets.values()]
        ax.hist(sizes, bins=min(20, max(3, len(sizes))), alpha=0.6, label=level)
        plotted = True
    ax.set_xlabel("Gaussians per object")
    ax.set_ylabel("objects")
    ax.set_title("Object size distribution")
    if plotted:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def figure_metric_bars(report: MetricReport, path: str | os.PathLike) -> None:
    labels = [str(rec["gt_id"]) for rec in report.per_object]
    psnrs = [rec["psnr"] for rec in report.per_object]
    ssims = [rec["ssim"] for rec in report.per_object]
    x = np.arange(len(labels))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.bar(x, psnrs, color="#4c72b0")
    ax1.set_xticks(x, labels)
    ax1.set_xlabel("ground-truth object")
    ax1.set_ylabel("PSNR (dB)")
    ax1.set_title(f"PSNR per object (mean {report.psnr_mean:.2f} dB)")
    ax2.bar(x, ssims, color="#dd8452")
    ax2.set_xticks(x, labels)
    ax2.set_xlabel("ground-truth object")
    ax2.set_ylabel("SSIM")
    ax2.set_ylim(0, 1.05)
    ax2.set_title(f"SSIM per object (mean {report.ssim_mean:.4f})")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def figure_miou(report: MetricReport, path: str | os.PathLike) -> None:
    levels = list(report.miou)
    values = [report.miou[lv] for lv in levels]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(levels, values, color="#55a868")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mIoU")
    ax.set_title("Mask mIoU per level")
    for i, v in enumerate(values):
        ax.text(i, v, f"{v:.3f}", ha="center", va="bottom", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def figure_pca_variance(ratio: np.ndarray, path: str | os.PathLike) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(1, len(ratio) + 1)
    ax.bar(x, ratio, color="#4c72b0", label="per component")
    ax.plot(x, np.cumsum(ratio), color="#dd8452", marker="o", label="cumulative")
    ax.set_xlabel("principal component")
    ax.set_ylabel("explained variance ratio")
    ax.set_title("Feature PCA spectrum")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
