"""Deterministic G-buffer weather and relighting engine.

Renders rain, snow, fog and night conditions over per-frame intrinsic
buffers (depth, normal, albedo, roughness, metallic, semantic masks)
using explicit physical models.  All randomness flows from a single
config seed; repeated runs are byte-identical.
"""

from gbweather.camera import CameraModel
from gbweather.gbuffer import GBufferFrame
from gbweather.sequence import SparseDepthPoint, load_sequence, save_frame

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "GBufferFrame",
    "SparseDepthPoint",
    "load_sequence",
    "save_frame",
    "__version__",
]
