"""Perspective projection of 3D Gaussians to screen-space 2D Gaussians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gslift.errors import PreconditionError
from gslift.io.gaussian_field import GaussianField, quaternions_to_matrices
from gslift.io.manifest import Frame

# Pixel-space variance floor added to both diagonal entries of the projected
# covariance; keeps sub-pixel splats at least a pixel wide and invertible.
COV2D_FLOOR = 0.3

# Opacity below which a Gaussian can never pass the compositing skip test.
MIN_ALPHA = 1.0 / 255.0

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


@dataclass
class ProjectedGaussians:
    """Screen-space Gaussians for one view, stored as parallel arrays.

    ``index`` holds the original field indices so downstream buffers refer to
    the full field even after culling or subset rendering. ``cov2d`` is the
    2x2 projected covariance including the variance floor; ``radius`` is the
    pixel footprint radius used by tile binning.
    """

    index: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: np.ndarray
    color: np.ndarray
    opacity: np.ndarray
    radius: np.ndarray

    def __len__(self) -> int:
        return self.index.shape[0]

    def is_depth_sorted(self) -> bool:
        return bool(np.all(np.diff(self.depth) >= 0))

    def take(self, order: np.ndarray) -> "ProjectedGaussians":
        return ProjectedGaussians(
            index=self.index[order],
            mean2d=self.mean2d[order],
            cov2d=self.cov2d[order],
            depth=self.depth[order],
            color=self.color[order],
            opacity=self.opacity[order],
            radius=self.radius[order],
        )


def project_gaussians(field: GaussianField, frame: Frame, near: float = 0.01) -> ProjectedGaussians:
    """Project a field into a frame's image plane.

    Culls Gaussians behind the near plane, with opacity too low to ever
    contribute, or whose footprint misses the viewport entirely. The
    projected covariance is J W Sigma W^T J^T with the pinhole Jacobian J
    evaluated at the Gaussian center, plus a 0.3 px^2 diagonal floor.
    """
    pos = field.positions.astype(np.float64)
    cam = pos @ frame.rotation.T + frame.translation
    keep = cam[:, 2] > near
    keep &= field.opacities >= MIN_ALPHA
    idx = np.nonzero(keep)[0]
    cam = cam[idx]
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]

    u = frame.fx * x / z + frame.cx
    v = frame.fy * y / z + frame.cy

    # J rows: d(u,v)/d(x,y,z) at the center point.
    m = idx.size
    jac = np.zeros((m, 2, 3), dtype=np.float64)
    jac[:, 0, 0] = frame.fx / z
    jac[:, 0, 2] = -frame.fx * x / (z * z)
    jac[:, 1, 1] = frame.fy / z
    jac[:, 1, 2] = -frame.fy * y / (z * z)

    rot3 = quaternions_to_matrices(field.rotations[idx])
    scaled = rot3 * field.scales[idx][:, None, :]
    cov3 = np.einsum("nij,nkj->nik", scaled, scaled)
    jw = np.einsum("nij,jk->nik", jac, frame.rotation)
    cov2 = np.einsum("nij,njk,nlk->nil", jw, cov3, jw)
    cov2[:, 0, 0] += COV2D_FLOOR
    cov2[:, 1, 1] += COV2D_FLOOR

    a = cov2[:, 0, 0]
    b = cov2[:, 0, 1]
    c = cov2[:, 1, 1]
    det = a * c - b * b
    ok = det > 1e-12
    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    sigma = np.sqrt(np.maximum(lam_max, 0.0))
    # Footprint must reach out to where alpha falls below 1/255, otherwise
    # tile binning would drop contributions the compositor still counts.
    opac = field.opacities[idx]
    cut = np.sqrt(2.0 * np.log(np.maximum(opac * 255.0, 1.0 + 1e-12)))
    radius = np.maximum(3.0, cut) * sigma + 0.5

    ok &= (u + radius > 0) & (u - radius < frame.width)
    ok &= (v + radius > 0) & (v - radius < frame.height)

    center = frame.camera_center()
    dirs = pos[idx] - center
    norms = np.linalg.norm(dirs, axis=1)
    dirs = dirs / np.maximum(norms, 1e-12)[:, None]
    color = eval_sh_colors(dirs, field.sh_coeffs[idx], field.sh_degree)

    sel = np.nonzero(ok)[0]
    return ProjectedGaussians(
        index=idx[sel].astype(np.int32),
        mean2d=np.stack([u[sel], v[sel]], axis=1),
        cov2d=cov2[sel],
        depth=z[sel],
        color=color[sel],
        opacity=opac[sel].astype(np.float64),
        radius=radius[sel],
    )


def sort_by_depth(projected: ProjectedGaussians) -> ProjectedGaussians:
    """Front-to-back ordering; depth ties break toward the lower field index."""
    order = np.lexsort((projected.index, projected.depth))
    return projected.take(order)


def eval_sh_colors(dirs: np.ndarray, sh: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate spherical-harmonic colors along unit view directions.

    ``dirs`` is (M, 3), ``sh`` is (M, K, 3); returns (M, 3) clamped to [0, 1].
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    sh = np.asarray(sh, dtype=np.float64)
    if degree < 0 or (degree + 1) ** 2 > sh.shape[1]:
        raise PreconditionError(
            f"degree {degree} needs {(degree + 1) ** 2} coefficient bands, "
            f"table has {sh.shape[1]}"
        )
    result = SH_C0 * sh[:, 0, :]
    if degree > 0:
        x, y, z = dirs[:, 0:1], dirs[:, 1:2], dirs[:, 2:3]
        result = result - SH_C1 * y * sh[:, 1, :] + SH_C1 * z * sh[:, 2, :] - SH_C1 * x * sh[:, 3, :]
        if degree > 1:
            xx, yy, zz = x * x, y * y, z * z
            xy, yz, xz = x * y, y * z, x * z
            result = (
                result
                + SH_C2[0] * xy * sh[:, 4, :]
                + SH_C2[1] * yz * sh[:, 5, :]
                + SH_C2[2] * (2.0 * zz - xx - yy) * sh[:, 6, :]
                + SH_C2[3] * xz * sh[:, 7, :]
                + SH_C2[4] * (xx - yy) * sh[:, 8, :]
            )
            if degree > 2:
                result = (
                    result
                    + SH_C3[0] * y * (3.0 * xx - yy) * sh[:, 9, :]
                    + SH_C3[1] * xy * z * sh[:, 10, :]
                    + SH_C3[2] * y * (4.0 * zz - xx - yy) * sh[:, 11, :]
                    + SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * sh[:, 12, :]
                    + SH_C3[4] * x * (4.0 * zz - xx - yy) * sh[:, 13, :]
                    + SH_C3[5] * z * (xx - yy) * sh[:, 14, :]
                    + SH_C3[6] * x * (xx - yy) * sh[:, 15, :]
                )
    return np.clip(result + 0.5, 0.0, 1.0)
