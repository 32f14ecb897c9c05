"""Deterministic camera rig on a viewing hemisphere around an object."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gslift.errors import PreconditionError
from gslift.io.gaussian_field import GaussianField
from gslift.io.manifest import Frame
from gslift.raster.projection import project_gaussians, sort_by_depth
from gslift.raster.render import RenderBuffers, render_frame

DEFAULT_VIEW_COUNT = 50
DEFAULT_IMAGE_SIZE = 128
DEFAULT_RADIUS_SCALE = 2.5

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass
class HemisphereRig:
    """Camera placement parameters: a spiral of views over the upper hemisphere."""

    center: np.ndarray
    radius: float
    view_count: int = DEFAULT_VIEW_COUNT
    width: int = DEFAULT_IMAGE_SIZE
    height: int = DEFAULT_IMAGE_SIZE
    up: tuple = (0.0, 0.0, 1.0)
    focal: float | None = None

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.center.shape != (3,):
            raise PreconditionError(f"center must have 3 components, got {self.center.shape}")
        if self.radius <= 0:
            raise PreconditionError(f"radius must be positive, got {self.radius}")
        if self.view_count < 1:
            raise PreconditionError(f"view_count must be at least 1, got {self.view_count}")
        if self.width <= 0 or self.height <= 0:
            raise PreconditionError(f"viewport must be positive, got {self.width}x{self.height}")


def rig_for_object(
    field: GaussianField,
    indices,
    view_count: int = DEFAULT_VIEW_COUNT,
    width: int = DEFAULT_IMAGE_SIZE,
    height: int = DEFAULT_IMAGE_SIZE,
    radius_scale: float = DEFAULT_RADIUS_SCALE,
) -> HemisphereRig:
    """Rig centered on the object's centroid at 2.5x its bounding radius."""
    members = np.asarray(sorted(indices), dtype=np.int64)
    if members.size == 0:
        raise PreconditionError("cannot build a camera rig around an empty object")
    if members[0] < 0 or members[-1] >= len(field):
        raise PreconditionError(
            f"index {int(members[0]) if members[0] < 0 else int(members[-1])} "
            f"out of range for field of size {len(field)}"
        )
    pos = field.positions[members].astype(np.float64)
    center = pos.mean(axis=0)
    bound = float(np.linalg.norm(pos - center, axis=1).max())
    radius = radius_scale * max(bound, 1e-3)
    return HemisphereRig(
        center=center, radius=radius, view_count=view_count, width=width, height=height
    )


def hemisphere_cameras(rig: HemisphereRig) -> list:
    """Evenly spread cameras on the hemisphere, all aimed at the center.

    Views follow a golden-angle spiral in elevation and azimuth; the rig is a
    pure function of its parameters, so the same object always produces the
    same cameras.
    """
    up = np.asarray(rig.up, dtype=np.float64)
    up = up / np.linalg.norm(up)
    basis_x, basis_y = _tangent_basis(up)
    focal = float(rig.focal) if rig.focal is not None else float(rig.width)

    frames = []
    n = rig.view_count
    for i in range(n):
        elevation = (i + 0.5) / n
        azimuth = i * _GOLDEN_ANGLE
        ring = math.sqrt(max(1.0 - elevation * elevation, 0.0))
        direction = (
            ring * math.cos(azimuth) * basis_x
            + ring * math.sin(azimuth) * basis_y
            + elevation * up
        )
        eye = rig.center + rig.radius * direction
        rotation = _look_at(eye, rig.center, up)
        frames.append(
            Frame(
                frame_id=f"hemisphere_{i:03d}",
                width=rig.width,
                height=rig.height,
                fx=focal,
                fy=focal,
                cx=rig.width / 2.0,
                cy=rig.height / 2.0,
                rotation=rotation,
                translation=-rotation @ eye,
            )
        )
    return frames


def render_hemisphere(
    field: GaussianField,
    indices,
    rig: HemisphereRig | None = None,
    background=(1.0, 1.0, 1.0),
) -> list:
    """Render the object subset from every rig camera on a white background.

    Returns one :class:`RenderBuffers` per view, in rig order.
    """
    members = np.asarray(sorted(indices), dtype=np.int64)
    if rig is None:
        rig = rig_for_object(field, members)
    sub = field.subset(members)
    buffers: list[RenderBuffers] = []
    for frame in hemisphere_cameras(rig):
        projected = sort_by_depth(project_gaussians(sub, frame))
        buffers.append(
            render_frame(projected, frame.width, frame.height, background=background)
        )
    return buffers


def _tangent_basis(up: np.ndarray):
    helper = np.array([1.0, 0.0, 0.0])
    if abs(np.dot(helper, up)) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    x = np.cross(helper, up)
    x /= np.linalg.norm(x)
    y = np.cross(up, x)
    return x, y


def _look_at(eye: np.ndarray, center: np.ndarray, up: np.ndarray) -> np.ndarray:
    """World-to-camera rotation for x right, y down, z forward."""
    forward = center - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise PreconditionError("camera eye coincides with the look-at center")
    forward = forward / norm
    ref = up
    if abs(np.dot(forward, ref)) > 1.0 - 1e-8:
        ref = np.array([1.0, 0.0, 0.0])
        if abs(np.dot(forward, ref)) > 1.0 - 1e-8:
            ref = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, ref)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward], axis=0)
