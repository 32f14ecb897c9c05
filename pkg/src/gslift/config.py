"""Run configuration for the segmentation pipeline."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from gslift.errors import InputError, PreconditionError, SchemaError
from gslift.io.manifest import Manifest, load_manifest_document
from gslift.lifting import DEFAULT_MIN_GAUSSIANS, DEFAULT_MIN_PIXELS
from gslift.merging import MergeConfig
from gslift.postprocess import (
    DEFAULT_KNN,
    DEFAULT_MIN_OVERLAP,
    DEFAULT_SALIENT_FRACTION,
    DEFAULT_STD_RATIO,
    SPLIT_RADIUS_SCALE,
)

LEVEL_ORDER = ("object", "part", "subpart")


@dataclass
class RunConfig:
    """Everything a segmentation run needs, resolvable from JSON plus flags.

    ``levels`` must include "object"; "subpart" additionally requires
    "part" since each level nests in the previous one. All postprocess
    stages default to off.
    """

    manifest: str = ""
    field: str | None = None
    out_dir: str = "gslift_out"
    levels: tuple = ("object",)

    tau_geom: float = 0.1
    tau_sem: float = 0.75
    lambda_sem: float = 1.0
    printed_semantic: bool = False

    min_pixels: int = DEFAULT_MIN_PIXELS
    min_gaussians: int = DEFAULT_MIN_GAUSSIANS
    fragment_subsample: float = 1.0

    prune_floaters: bool = False
    keep_fraction: float = 0.95
    remove_outliers: bool = False
    outlier_knn: int = DEFAULT_KNN
    outlier_std_ratio: float = DEFAULT_STD_RATIO
    split_objects: bool = False
    salient_fraction: float = DEFAULT_SALIENT_FRACTION
    merge_residue: bool = False
    min_overlap: float = DEFAULT_MIN_OVERLAP
    split_radius_scale: float = SPLIT_RADIUS_SCALE

    seed: int = 0
    threads: int = 1
    near: float = 0.01
    cache_buffers: bool = True
    figures: bool = True

    def merge_config(self) -> MergeConfig:
        return MergeConfig(
            tau_geom=self.tau_geom,
            tau_sem=self.tau_sem,
            lambda_sem=self.lambda_sem,
            printed_semantic=self.printed_semantic,
        )

    def normalized_levels(self) -> tuple:
        return tuple(level for level in LEVEL_ORDER if level in self.levels)

    def validate(self) -> None:
        """Check values and that every referenced input file exists."""
        if not self.manifest:
            raise PreconditionError("a manifest path is required")
        for level in self.levels:
            if level not in LEVEL_ORDER:
                raise PreconditionError(
                    f"unknown level '{level}', expected a subset of {LEVEL_ORDER}"
                )
        if "object" not in self.levels:
            raise PreconditionError("levels must include 'object'")
        if "subpart" in self.levels and "part" not in self.levels:
            raise PreconditionError("'subpart' requires 'part' in levels")
        self.merge_config()
        if self.min_pixels < 0 or self.min_gaussians < 0:
            raise PreconditionError("size floors must be non-negative")
        if not 0.0 < self.fragment_subsample <= 1.0:
            raise PreconditionError(
                f"fragment_subsample must be in (0, 1], got {self.fragment_subsample}"
            )
        if not 0.0 < self.keep_fraction <= 1.0:
            raise PreconditionError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        if self.threads < 1:
            raise PreconditionError(f"threads must be at least 1, got {self.threads}")
        if self.near <= 0:
            raise PreconditionError(f"near plane must be positive, got {self.near}")

        if not os.path.exists(self.manifest):
            raise InputError(f"manifest not found: {self.manifest}")
        manifest = load_manifest_document(self.manifest)
        field_path = self.field or manifest.field_path
        if field_path is None:
            raise SchemaError(
                f"{self.manifest}: no 'field' entry and no field override given"
            )
        if not os.path.exists(field_path):
            raise InputError(f"field file not found: {field_path}")
        for frame in manifest.frames:
            for level in self.normalized_levels():
                if level not in frame.mask_paths:
                    raise SchemaError(
                        f"frame '{frame.frame_id}' has no mask for level '{level}'"
                    )
                if level not in frame.feature_paths:
                    raise SchemaError(
                        f"frame '{frame.frame_id}' has no features for level '{level}'"
                    )
                for path in (frame.mask_paths[level], frame.feature_paths[level]):
                    if not os.path.exists(path):
                        raise InputError(
                            f"frame '{frame.frame_id}': input not found: {path}"
                        )

    def resolve_manifest(self) -> tuple[Manifest, str]:
        """Load the manifest and decide the effective field path."""
        manifest = load_manifest_document(self.manifest)
        field_path = self.field or manifest.field_path
        if field_path is None:
            raise SchemaError(
                f"{self.manifest}: no 'field' entry and no field override given"
            )
        return manifest, field_path


def load_run_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus override values.

    Unknown keys in the file raise :class:`SchemaError` so typos fail loudly.
    """
    values: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise SchemaError(f"{path}: config root must be a JSON object")
        # Paths in the file are relative to the file, not the working directory.
        base = os.path.dirname(os.path.abspath(path))
        for key in ("manifest", "field", "out_dir"):
            if isinstance(doc.get(key), str) and doc[key] and not os.path.isabs(doc[key]):
                doc[key] = os.path.normpath(os.path.join(base, doc[key]))
        values.update(doc)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    known = set(RunConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise SchemaError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "levels" in values:
        values["levels"] = tuple(values["levels"])
    return RunConfig(**values)


def config_to_json(config: RunConfig) -> str:
    doc = asdict(config)
    doc["levels"] = list(config.levels)
    return json.dumps(doc, indent=2, sort_keys=True)
