"""In-memory representation of a 3D Gaussian splatting field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gslift.errors import DataError, PreconditionError

# Spherical-harmonics band counts allowed for the color model (degrees 0..3).
VALID_SH_COUNTS = (1, 4, 9, 16)


@dataclass
class GaussianField:
    """A set of N anisotropic 3D Gaussians with appearance parameters.

    All parameters are stored in activated form: ``opacities`` in [0, 1],
    ``scales`` as positive standard deviations per axis, ``rotations`` as
    unit quaternions (w, x, y, z), ``sh_coeffs`` as (N, K, 3) spherical
    harmonic color coefficients with K in {1, 4, 9, 16}.
    """

    positions: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    sh_coeffs: np.ndarray

    def __post_init__(self) -> None:
        n = self.positions.shape[0]
        if self.positions.shape != (n, 3):
            raise PreconditionError(f"positions must be (N, 3), got {self.positions.shape}")
        if self.scales.shape != (n, 3):
            raise PreconditionError(f"scales must be (N, 3), got {self.scales.shape}")
        if self.rotations.shape != (n, 4):
            raise PreconditionError(f"rotations must be (N, 4), got {self.rotations.shape}")
        if self.opacities.shape != (n,):
            raise PreconditionError(f"opacities must be (N,), got {self.opacities.shape}")
        if self.sh_coeffs.ndim != 3 or self.sh_coeffs.shape[0] != n or self.sh_coeffs.shape[2] != 3:
            raise PreconditionError(f"sh_coeffs must be (N, K, 3), got {self.sh_coeffs.shape}")
        if self.sh_coeffs.shape[1] not in VALID_SH_COUNTS:
            raise DataError(
                f"sh_coeffs has {self.sh_coeffs.shape[1]} bands per channel; "
                f"expected one of {VALID_SH_COUNTS}"
            )

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def sh_degree(self) -> int:
        return int(np.sqrt(self.sh_coeffs.shape[1])) - 1

    def covariances(self) -> np.ndarray:
        """World-space 3x3 covariances built as R * diag(s)^2 * R^T, shape (N, 3, 3)."""
        rot = quaternions_to_matrices(self.rotations)
        scaled = rot * self.scales[:, None, :]
        return np.einsum("nij,nkj->nik", scaled, scaled)

    def subset(self, indices: np.ndarray) -> "GaussianField":
        """A new field containing only the given Gaussians, in index order."""
        idx = _checked_indices(indices, len(self))
        return GaussianField(
            positions=self.positions[idx].copy(),
            scales=self.scales[idx].copy(),
            rotations=self.rotations[idx].copy(),
            opacities=self.opacities[idx].copy(),
            sh_coeffs=self.sh_coeffs[idx].copy(),
        )


def _checked_indices(indices, count: int) -> np.ndarray:
    from gslift.errors import IndexingError

    idx = np.asarray(sorted(indices), dtype=np.int64)
    if idx.size == 0:
        raise PreconditionError("empty object: index set contains no Gaussians")
    if idx.size and (idx[0] < 0 or idx[-1] >= count):
        bad = int(idx[0]) if idx[0] < 0 else int(idx[-1])
        raise IndexingError(f"Gaussian index {bad} out of range for field of size {count}")
    if np.any(np.diff(idx) == 0):
        dup = int(idx[np.nonzero(np.diff(idx) == 0)[0][0]])
        raise PreconditionError(f"duplicate Gaussian index {dup} in index set")
    return idx


def quaternions_to_matrices(quats: np.ndarray) -> np.ndarray:
    """Rotation matrices (N, 3, 3) from unit quaternions in (w, x, y, z) order."""
    q = np.asarray(quats, dtype=np.float64)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m
