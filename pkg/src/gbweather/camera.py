"""Pinhole camera model: the sole authority for projection math.

Conventions: camera space is +x right, +y down, +z forward; integer
pixel coordinates (u, v) address pixel centers directly, so the ray of
pixel (u, v) is K^-1 [u, v, 1]^T.  The stored pose maps camera space to
world space (world-from-camera).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gbweather.errors import ConfigError


@dataclass
class CameraModel:
    K: np.ndarray                 # 3x3 intrinsics, zero skew
    R: np.ndarray                 # 3x3 world-from-camera rotation
    t: np.ndarray                 # 3-vector world translation, meters
    frame_interval: float = 1.0 / 30.0
    K_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise ConfigError(f"camera fx/fy must be positive, got K diag "
                              f"({self.K[0, 0]}, {self.K[1, 1]})")
        det = np.linalg.det(self.K)
        if abs(det) < 1e-12:
            raise ConfigError("camera intrinsic matrix is not invertible")
        err = np.abs(self.R @ self.R.T - np.eye(3)).max()
        if err > 1e-6 or abs(np.linalg.det(self.R) - 1.0) > 1e-6:
            raise ConfigError(f"camera rotation is not a proper rotation "
                              f"(orthonormality error {err:.2e})")
        self.K_inv = np.linalg.inv(self.K)

    # -- projection -------------------------------------------------------

    def unproject(self, uv, depth):
        """Pixel (u, v) at camera depth d -> camera-space point d*K^-1*[u,v,1].

        Broadcasts: uv (..., 2) with depth (...) -> (..., 3).
        """
        uv = np.asarray(uv, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        ones = np.ones(uv.shape[:-1] + (1,))
        homog = np.concatenate([uv, ones], axis=-1)
        rays = homog @ self.K_inv.T
        return rays * depth[..., None]

    def project(self, points_cam):
        """Camera-space points (..., 3) -> pixel coords (..., 2) plus depth (...)."""
        p = np.asarray(points_cam, dtype=np.float64) @ self.K.T
        z = p[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = p[..., :2] / z[..., None]
        return uv, z

    # -- rigid transform ---------------------------------------------------

    def camera_to_world(self, points_cam):
        return np.asarray(points_cam, dtype=np.float64) @ self.R.T + self.t

    def world_to_camera(self, points_world):
        return (np.asarray(points_world, dtype=np.float64) - self.t) @ self.R

    # -- derived quantities -------------------------------------------------

    @property
    def position(self):
        """World-space camera origin."""
        return self.t

    @property
    def forward(self):
        """World-space view direction (camera +z)."""
        return self.R[:, 2]

    def pixel_rays(self, width, height):
        """(H, W, 3) array of K^-1 [u, v, 1] rays for every pixel center."""
        u, v = np.meshgrid(np.arange(width, dtype=np.float64),
                           np.arange(height, dtype=np.float64))
        homog = np.stack([u, v, np.ones_like(u)], axis=-1)
        return homog @ self.K_inv.T

    def unproject_grid(self, depth):
        """Full-frame unprojection: depth raster (H, W) -> camera points (H, W, 3)."""
        h, w = depth.shape
        return self.pixel_rays(w, h) * np.asarray(depth, dtype=np.float64)[..., None]
