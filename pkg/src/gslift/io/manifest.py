"""Scene manifest: the JSON document tying a field to its per-frame inputs."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from gslift.errors import GeometryError, IntegrityError, SchemaError

_REQUIRED_FRAME_KEYS = (
    "id", "width", "height", "fx", "fy", "cx", "cy", "rotation", "translation",
)


@dataclass
class Frame:
    """One calibrated view: pinhole intrinsics plus a world-to-camera pose.

    The camera convention is x right, y down, z forward; ``rotation`` and
    ``translation`` map world points into that camera frame. ``mask_paths``
    and ``feature_paths`` are keyed by segmentation level ("object", "part",
    "subpart") and hold absolute paths.
    """

    frame_id: str
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray
    mask_paths: dict = field(default_factory=dict)
    feature_paths: dict = field(default_factory=dict)

    def camera_center(self) -> np.ndarray:
        """World-space camera origin."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Transform (N, 3) world points into camera coordinates."""
        return points @ self.rotation.T + self.translation


@dataclass
class Manifest:
    """Parsed manifest: the field path plus the ordered frame list."""

    field_path: str | None
    frames: list


def load_manifest_document(path: str | os.PathLike) -> Manifest:
    """Parse a manifest JSON file, resolving paths relative to its directory.

    Raises :class:`SchemaError` for missing or ill-typed keys (naming the
    frame id), :class:`GeometryError` for non-orthonormal rotations, and
    :class:`IntegrityError` for duplicate frame ids. An empty frame list is
    legal and returns an empty manifest.
    """
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: manifest root must be a JSON object")

    field_path = doc.get("field")
    if field_path is not None:
        if not isinstance(field_path, str):
            raise SchemaError(f"{path}: 'field' must be a string path")
        field_path = _resolve(base, field_path)

    raw_frames = doc.get("frames", [])
    if not isinstance(raw_frames, list):
        raise SchemaError(f"{path}: 'frames' must be a list")

    frames = []
    seen_ids = set()
    for i, rec in enumerate(raw_frames):
        if not isinstance(rec, dict):
            raise SchemaError(f"{path}: frame record {i} is not an object")
        frame_id = rec.get("id", f"<frame {i}>")
        for key in _REQUIRED_FRAME_KEYS:
            if key not in rec:
                raise SchemaError(f"{path}: frame '{frame_id}' is missing required key '{key}'")
        if not isinstance(rec["id"], str):
            raise SchemaError(f"{path}: frame record {i}: 'id' must be a string")
        if frame_id in seen_ids:
            raise IntegrityError(f"{path}: duplicate frame id '{frame_id}'")
        seen_ids.add(frame_id)

        width, height = _int_field(rec, "width", frame_id, path), _int_field(rec, "height", frame_id, path)
        if width <= 0 or height <= 0:
            raise SchemaError(f"{path}: frame '{frame_id}': width and height must be positive")
        fx = _float_field(rec, "fx", frame_id, path)
        fy = _float_field(rec, "fy", frame_id, path)
        cx = _float_field(rec, "cx", frame_id, path)
        cy = _float_field(rec, "cy", frame_id, path)
        if fx <= 0 or fy <= 0:
            raise GeometryError(f"{path}: frame '{frame_id}': focal lengths must be positive")

        rotation = np.asarray(rec["rotation"], dtype=np.float64)
        if rotation.shape != (3, 3):
            raise SchemaError(
                f"{path}: frame '{frame_id}': rotation must be a 3x3 matrix, got shape {rotation.shape}"
            )
        if not np.all(np.isfinite(rotation)):
            raise GeometryError(f"{path}: frame '{frame_id}': rotation has non-finite entries")
        err = np.abs(rotation @ rotation.T - np.eye(3)).max()
        if err > 1e-5 or np.linalg.det(rotation) < 0:
            raise GeometryError(
                f"{path}: frame '{frame_id}': rotation is not orthonormal "
                f"(max deviation {err:.3g}, det {np.linalg.det(rotation):.3g})"
            )
        translation = np.asarray(rec["translation"], dtype=np.float64)
        if translation.shape != (3,):
            raise SchemaError(f"{path}: frame '{frame_id}': translation must have 3 components")
        if not np.all(np.isfinite(translation)):
            raise GeometryError(f"{path}: frame '{frame_id}': translation has non-finite entries")

        mask_paths = _path_map(rec.get("masks", {}), "masks", frame_id, path, base)
        feature_paths = _path_map(rec.get("features", {}), "features", frame_id, path, base)

        frames.append(
            Frame(
                frame_id=frame_id,
                width=width,
                height=height,
                fx=fx,
                fy=fy,
                cx=cx,
                cy=cy,
                rotation=rotation,
                translation=translation,
                mask_paths=mask_paths,
                feature_paths=feature_paths,
            )
        )
    return Manifest(field_path=field_path, frames=frames)


def load_manifest(path: str | os.PathLike) -> list:
    """Frame list from a manifest file, in document order."""
    return load_manifest_document(path).frames


def _resolve(base: str, p: str) -> str:
    return p if os.path.isabs(p) else os.path.normpath(os.path.join(base, p))


def _int_field(rec: dict, key: str, frame_id: str, path) -> int:
    v = rec[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{path}: frame '{frame_id}': '{key}' must be an integer")
    return v


def _float_field(rec: dict, key: str, frame_id: str, path) -> float:
    v = rec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{path}: frame '{frame_id}': '{key}' must be a number")
    return float(v)


def _path_map(raw, key: str, frame_id: str, path, base: str) -> dict:
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: frame '{frame_id}': '{key}' must be an object of level -> path")
    out = {}
    for level, p in raw.items():
        if not isinstance(p, str):
            raise SchemaError(
                f"{path}: frame '{frame_id}': {key}['{level}'] must be a string path"
            )
        out[str(level)] = _resolve(base, p)
    return out
