"""Command-line interface: segment, extract, prune, render, evaluate, lift-features."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from gslift import __version__
from gslift.config import RunConfig, config_to_json, load_run_config
from gslift.errors import IndexingError, InputError
from gslift.io.labels import LEVELS, load_labels
from gslift.io.manifest import load_manifest_document
from gslift.io.ply import load_field, save_object_field
from gslift.io.features import save_features
from gslift.pipeline import cmd_segment, set_threads, warm_up_renderer
from gslift.raster.projection import project_gaussians, sort_by_depth
from gslift.raster.render import render_frame, save_color_png, save_contributor_dump
from gslift.raster.stats import ViewStats, accumulate_view_stats


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - internal faults
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gslift",
        description="Training-free instance segmentation for 3D Gaussian splatting fields",
    )
    parser.add_argument("--version", action="version", version=f"gslift {__version__}")
    sub = parser.add_subparsers(dest="command")

    seg = sub.add_parser("segment", help="lift masks, merge fragments, write labels")
    seg.add_argument("--config", help="JSON config file; flags override its values")
    seg.add_argument("--manifest", help="scene manifest JSON")
    seg.add_argument("--field", help="field PLY (overrides the manifest entry)")
    seg.add_argument("--out", dest="out_dir", help="output directory")
    seg.add_argument("--levels", nargs="+", choices=list(LEVELS), help="levels to segment")
    seg.add_argument("--tau-geom", type=float, dest="tau_geom")
    seg.add_argument("--tau-sem", type=float, dest="tau_sem")
    seg.add_argument("--lambda-sem", type=float, dest="lambda_sem")
    seg.add_argument("--printed-semantic", action="store_true", default=None,
                     dest="printed_semantic",
                     help="use the raw cos/2 similarity variant")
    seg.add_argument("--min-pixels", type=int, dest="min_pixels")
    seg.add_argument("--min-gaussians", type=int, dest="min_gaussians")
    seg.add_argument("--subsample", type=float, dest="fragment_subsample",
                     help="per-fragment Gaussian subsampling fraction")
    seg.add_argument("--seed", type=int)
    seg.add_argument("--threads", type=int)
    seg.add_argument("--prune-floaters", action="store_true", default=None,
                     dest="prune_floaters")
    seg.add_argument("--keep-fraction", type=float, dest="keep_fraction")
    seg.add_argument("--remove-outliers", action="store_true", default=None,
                     dest="remove_outliers")
    seg.add_argument("--outlier-knn", type=int, dest="outlier_knn")
    seg.add_argument("--outlier-std-ratio", type=float, dest="outlier_std_ratio")
    seg.add_argument("--split-objects", action="store_true", default=None,
                     dest="split_objects")
    seg.add_argument("--salient-fraction", type=float, dest="salient_fraction")
    seg.add_argument("--merge-residue", action="store_true", default=None,
                     dest="merge_residue")
    seg.add_argument("--min-overlap", type=float, dest="min_overlap")
    seg.add_argument("--no-figures", action="store_true", help="skip report figures")
    seg.set_defaults(func=_run_segment)

    ext = sub.add_parser("extract", help="export labeled objects as splat PLY files")
    ext.add_argument("--field", required=True)
    ext.add_argument("--labels", required=True)
    ext.add_argument("--level", default="object", choices=list(LEVELS))
    ext.add_argument("--id", type=int, action="append", dest="ids",
                     help="instance id to extract (repeatable)")
    ext.add_argument("--all", action="store_true", help="extract every instance")
    ext.add_argument("--out", required=True, help="output directory")
    ext.set_defaults(func=_run_extract)

    prn = sub.add_parser("prune", help="drop view-inconsistent Gaussians from a field")
    prn.add_argument("--manifest", required=True)
    prn.add_argument("--field", help="field PLY (overrides the manifest entry)")
    prn.add_argument("--keep-fraction", type=float, default=0.95)
    prn.add_argument("--threads", type=int, default=1)
    prn.add_argument("--out", required=True, help="output directory")
    prn.set_defaults(func=_run_prune)

    ren = sub.add_parser("render", help="rasterize manifest frames to images")
    ren.add_argument("--manifest", required=True)
    ren.add_argument("--field", help="field PLY (overrides the manifest entry)")
    ren.add_argument("--frame", action="append", dest="frame_ids",
                     help="frame id to render (repeatable; default all)")
    ren.add_argument("--background", default="1,1,1", help="background as r,g,b in [0,1]")
    ren.add_argument("--dump", action="store_true",
                     help="also write contributor debug dumps")
    ren.add_argument("--threads", type=int, default=1)
    ren.add_argument("--out", required=True, help="output directory")
    ren.set_defaults(func=_run_render)

    ev = sub.add_parser("evaluate", help="score predicted labels against ground truth")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--field", help="field PLY (overrides the manifest entry)")
    ev.add_argument("--gt", required=True, help="ground-truth label sidecar")
    ev.add_argument("--pred", required=True, help="predicted label sidecar")
    ev.add_argument("--levels", nargs="+", default=["object"], choices=list(LEVELS))
    ev.add_argument("--views", type=int, default=50, help="hemisphere view count")
    ev.add_argument("--size", type=int, default=128, help="hemisphere image size")
    ev.add_argument("--threads", type=int, default=1)
    ev.add_argument("--no-figures", action="store_true")
    ev.add_argument("--out", required=True, help="output directory")
    ev.set_defaults(func=_run_evaluate)

    lf = sub.add_parser(
        "lift-features",
        help="average dense per-pixel features onto max-contributor Gaussians",
    )
    lf.add_argument("--manifest", required=True)
    lf.add_argument("--field", help="field PLY (overrides the manifest entry)")
    lf.add_argument("--dense-dir", required=True,
                    help="directory with <frame_id>.npy dense feature maps")
    lf.add_argument("--pca", type=int, default=0,
                    help="project lifted features onto this many principal components")
    lf.add_argument("--threads", type=int, default=1)
    lf.add_argument("--no-figures", action="store_true")
    lf.add_argument("--out", required=True, help="output directory")
    lf.set_defaults(func=_run_lift_features)

    return parser


def _run_segment(args) -> int:
    overrides = {
        key: getattr(args, key)
        for key in (
            "manifest", "field", "out_dir", "tau_geom", "tau_sem", "lambda_sem",
            "printed_semantic", "min_pixels", "min_gaussians", "fragment_subsample",
            "seed", "threads", "prune_floaters", "keep_fraction", "remove_outliers",
            "outlier_knn", "outlier_std_ratio", "split_objects", "salient_fraction",
            "merge_residue", "min_overlap",
        )
        if getattr(args, key, None) is not None
    }
    if args.levels:
        overrides["levels"] = tuple(args.levels)
    if args.no_figures:
        overrides["figures"] = False
    config = load_run_config(args.config, overrides)
    store, run = cmd_segment(config)

    from gslift import report

    report.write_run_json(run, os.path.join(config.out_dir, "run.json"))
    report.write_timings_csv(run, os.path.join(config.out_dir, "timings.csv"))
    report.write_objects_csv(store, os.path.join(config.out_dir, "objects.csv"))
    with open(os.path.join(config.out_dir, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(config_to_json(config))
        fh.write("\n")
    if config.figures:
        fig_dir = os.path.join(config.out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        report.figure_timing_breakdown(run, os.path.join(fig_dir, "timing_breakdown.png"))
        report.figure_object_counts(run, os.path.join(fig_dir, "objects_per_level.png"))
        report.figure_object_sizes(store, os.path.join(fig_dir, "object_sizes.png"))

    for level in run.levels:
        print(
            f"{level}: {run.objects_per_level[level]} objects, "
            f"{run.labeled_per_level[level]}/{run.n_gaussians} Gaussians labeled"
        )
    timings = run.timings
    print(
        "timings: preprocessing {preprocessing:.2f}s, lifting+merging "
        "{lifting_merging:.2f}s, postprocessing {postprocessing:.2f}s, "
        "total {total:.2f}s".format(**timings)
    )
    print(f"labels written to {run.label_path}")
    return 0


def _run_extract(args) -> int:
    field = load_field(args.field)
    store = load_labels(args.labels)
    if len(store) != len(field):
        raise InputError(
            f"label sidecar covers {len(store)} Gaussians but the field has {len(field)}"
        )
    sets = store.instance_sets(args.level)
    if not sets:
        raise InputError(f"no instances labeled at level '{args.level}'")
    if args.all:
        ids = sorted(sets)
    elif args.ids:
        ids = args.ids
    else:
        raise InputError("nothing to extract: pass --id or --all")
    os.makedirs(args.out, exist_ok=True)
    for oid in ids:
        if oid not in sets:
            raise IndexingError(
                f"no {args.level} with id {oid}; valid ids: {sorted(sets)}"
            )
        out_path = os.path.join(args.out, f"{args.level}_{oid:03d}.ply")
        save_object_field(field, sets[oid], out_path)
        print(f"{args.level} {oid}: {sets[oid].size} Gaussians -> {out_path}")
    return 0


def _load_scene(manifest_path: str, field_override: str | None):
    manifest = load_manifest_document(manifest_path)
    field_path = field_override or manifest.field_path
    if field_path is None:
        raise InputError(f"{manifest_path}: no 'field' entry and no --field override")
    return load_field(field_path), manifest.frames


def _run_prune(args) -> int:
    field, frames = _load_scene(args.manifest, args.field)
    if not frames:
        raise InputError(f"{args.manifest}: manifest has no frames")
    set_threads(args.threads)
    warm_up_renderer()
    from gslift.postprocess import prune_low_consistency

    stats = ViewStats.zeros(len(field))
    for frame in frames:
        projected = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(projected, frame.width, frame.height, mode="contributor")
        accumulate_view_stats(stats, buf)
    kept = prune_low_consistency(field, stats, args.keep_fraction)

    os.makedirs(args.out, exist_ok=True)
    out_ply = os.path.join(args.out, "pruned.ply")
    save_object_field(field, kept, out_ply)
    mask = np.ones(len(field), dtype=bool)
    mask[kept] = False
    pruned = np.nonzero(mask)[0]
    with open(os.path.join(args.out, "pruned_indices.csv"), "w", encoding="utf-8") as fh:
        fh.write("gaussian_index\n")
        for i in pruned:
            fh.write(f"{int(i)}\n")
    print(f"kept {kept.size}/{len(field)} Gaussians ({pruned.size} pruned) -> {out_ply}")
    return 0


def _run_render(args) -> int:
    field, frames = _load_scene(args.manifest, args.field)
    if not frames:
        raise InputError(f"{args.manifest}: manifest has no frames")
    try:
        background = tuple(float(v) for v in args.background.split(","))
        if len(background) != 3:
            raise ValueError
    except ValueError:
        raise InputError(
            f"--background must be r,g,b numbers, got '{args.background}'"
        ) from None
    wanted = set(args.frame_ids) if args.frame_ids else None
    if wanted:
        known = {f.frame_id for f in frames}
        missing = wanted - known
        if missing:
            raise InputError(f"unknown frame id(s): {', '.join(sorted(missing))}")
    set_threads(args.threads)
    warm_up_renderer()
    os.makedirs(args.out, exist_ok=True)
    rendered = 0
    for frame in frames:
        if wanted and frame.frame_id not in wanted:
            continue
        projected = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(projected, frame.width, frame.height, background=background)
        save_color_png(buf, os.path.join(args.out, f"{frame.frame_id}_color.png"))
        if args.dump:
            save_contributor_dump(buf, os.path.join(args.out, f"{frame.frame_id}_contrib.lbgb"))
        rendered += 1
    print(f"rendered {rendered} frame(s) to {args.out}")
    return 0


def _run_evaluate(args) -> int:
    field, frames = _load_scene(args.manifest, args.field)
    if not frames:
        raise InputError(f"{args.manifest}: manifest has no frames")
    gt = load_labels(args.gt)
    pred = load_labels(args.pred)
    set_threads(args.threads)
    warm_up_renderer()
    from gslift import report
    from gslift.evaluation import evaluate_labels

    result = evaluate_labels(
        field, frames, gt, pred,
        miou_levels=tuple(args.levels),
        hemisphere_views=args.views,
        hemisphere_size=args.size,
    )
    os.makedirs(args.out, exist_ok=True)
    report.write_metrics_json(result, os.path.join(args.out, "metrics.json"))
    report.write_metrics_csv(result, os.path.join(args.out, "metrics.csv"))
    if not args.no_figures:
        fig_dir = os.path.join(args.out, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        report.figure_metric_bars(result, os.path.join(fig_dir, "metric_bars.png"))
        report.figure_miou(result, os.path.join(fig_dir, "miou.png"))
    print(f"PSNR mean: {result.psnr_mean:.4f} dB")
    print(f"SSIM mean: {result.ssim_mean:.6f}")
    for level, value in result.miou.items():
        print(f"mIoU[{level}]: {value:.6f}")
    return 0


def _run_lift_features(args) -> int:
    field, frames = _load_scene(args.manifest, args.field)
    if not frames:
        raise InputError(f"{args.manifest}: manifest has no frames")
    set_threads(args.threads)
    warm_up_renderer()
    from gslift.lifting import DenseFeatureAccumulator, pca_project

    accumulator = None
    for frame in frames:
        dense_path = os.path.join(args.dense_dir, f"{frame.frame_id}.npy")
        if not os.path.exists(dense_path):
            raise InputError(f"dense feature map not found: {dense_path}")
        dense = np.load(dense_path)
        if accumulator is None:
            if dense.ndim != 3:
                raise InputError(
                    f"{dense_path}: dense features must be HxWxD, got shape {dense.shape}"
                )
            accumulator = DenseFeatureAccumulator(len(field), dense.shape[2])
        projected = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(projected, frame.width, frame.height, mode="contributor")
        accumulator.add_frame(buf, dense)

    means = accumulator.means()
    os.makedirs(args.out, exist_ok=True)
    if args.pca > 0:
        scores, _, ratio = pca_project(means, args.pca)
        save_features(scores, os.path.join(args.out, "gaussian_features.lbgf"))
        if not args.no_figures:
            from gslift import report

            fig_dir = os.path.join(args.out, "figures")
            os.makedirs(fig_dir, exist_ok=True)
            report.figure_pca_variance(ratio, os.path.join(fig_dir, "pca_variance.png"))
        print(
            f"lifted {means.shape[1]}-d features for {len(field)} Gaussians, "
            f"kept {args.pca} principal components "
            f"({ratio.sum() * 100:.1f}% variance)"
        )
    else:
        save_features(means, os.path.join(args.out, "gaussian_features.lbgf"))
        print(f"lifted {means.shape[1]}-d features for {len(field)} Gaussians")
    covered = int(np.count_nonzero(accumulator.counts))
    print(f"{covered}/{len(field)} Gaussians received pixel evidence")
    return 0


if __name__ == "__main__":
    sys.exit(main())
