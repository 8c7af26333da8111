"""Per-frame intrinsic scene state mutated in place by the Geometry Pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gbweather.errors import LoadError


@dataclass
class GBufferFrame:
    """All raster channels of one frame.

    depth is metric meters after calibration; normal is camera-space unit
    vectors; albedo is linear RGB.  Single-writer semantics: exactly one
    pass mutates a frame at a time.
    """

    width: int
    height: int
    depth: np.ndarray                 # (H, W) float
    normal: np.ndarray                # (H, W, 3) float, unit where valid
    albedo: np.ndarray                # (H, W, 3) float in [0, 1]
    roughness: np.ndarray             # (H, W) float in [0, 1]
    metallic: np.ndarray              # (H, W) float in [0, 1]
    sky_mask: np.ndarray              # (H, W) bool
    road_mask: np.ndarray             # (H, W) bool
    vehicle_mask: np.ndarray          # (H, W) bool
    streetlight_mask: np.ndarray      # (H, W) bool
    image: np.ndarray | None = None   # (H, W, 3) linear RGB input frame, optional
    alpha_overlay: np.ndarray | None = None  # (H, W, 4) premultiplied RGBA
    degenerate_normals: np.ndarray | None = field(default=None, repr=False)

    def validate(self, context: str = "frame") -> None:
        """Raise LoadError unless every channel invariant holds."""
        shape = (self.height, self.width)
        channels = {
            "depth": (self.depth, shape),
            "normal": (self.normal, shape + (3,)),
            "albedo": (self.albedo, shape + (3,)),
            "roughness": (self.roughness, shape),
            "metallic": (self.metallic, shape),
            "sky_mask": (self.sky_mask, shape),
            "road_mask": (self.road_mask, shape),
            "vehicle_mask": (self.vehicle_mask, shape),
            "streetlight_mask": (self.streetlight_mask, shape),
        }
        for name, (arr, want) in channels.items():
            if arr.shape != want:
                raise LoadError(f"{context}: channel '{name}' has shape "
                                f"{arr.shape}, expected {want}")
        for name, arr in (("albedo", self.albedo), ("roughness", self.roughness),
                          ("metallic", self.metallic)):
            if arr.size and (arr.min() < -1e-6 or arr.max() > 1 + 1e-6):
                raise LoadError(f"{context}: channel '{name}' outside [0,1] "
                                f"(range {arr.min():.4g}..{arr.max():.4g})")
        norms = np.linalg.norm(self.normal, axis=-1)
        bad = np.abs(norms - 1.0) > 1e-3
        if bad.any():
            raise LoadError(f"{context}: channel 'normal' has {int(bad.sum())} "
                            f"non-unit normals")

    def renormalize_normals(self) -> None:
        """Renormalize normals in place; zero-length ones become (0,0,-1).

        Degenerate pixels are flagged in self.degenerate_normals.
        """
        norms = np.linalg.norm(self.normal, axis=-1)
        degenerate = norms < 1e-8
        safe = np.where(degenerate, 1.0, norms)
        self.normal = self.normal / safe[..., None]
        self.normal[degenerate] = (0.0, 0.0, -1.0)
        self.degenerate_normals = degenerate

    def clamp_materials(self) -> None:
        np.clip(self.albedo, 0.0, 1.0, out=self.albedo)
        np.clip(self.roughness, 0.0, 1.0, out=self.roughness)
        np.clip(self.metallic, 0.0, 1.0, out=self.metallic)

    def ensure_overlay(self) -> np.ndarray:
        """Allocate the particle overlay on first use (premultiplied RGBA)."""
        if self.alpha_overlay is None:
            self.alpha_overlay = np.zeros((self.height, self.width, 4))
        return self.alpha_overlay
