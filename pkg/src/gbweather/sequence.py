"""Manifest-driven sequence I/O.

The manifest is a JSON document listing per-frame channel files and
camera parameters:

    {
      "fps": 30,
      "sequence_id": "demo",              (optional)
      "frames": [
        {
          "depth": "d0.pfm", "normal": "n0.pfm", "albedo": "a0.pfm",
          "roughness": "r0.pfm", "metallic": "m0.pfm",
          "image": "rgb0.png",            (optional original video frame)
          "masks": {"sky": "...", "road": "...", "vehicle": "...",
                    "streetlight": "..."},
          "camera": {"K": [9 row-major], "R": [9], "t": [3]},
          "sparse_depth": "lidar0.txt"    (optional "u v d" lines)
        }, ...
      ],
      "sparse_depth": "lidar.txt"         (optional, applies to frame 0)
    }

Paths are relative to the manifest.  Float channels are PFM; albedo and
image may instead be 8-bit sRGB PNG, decoded to linear on load.  Masks
are 8-bit PGM/PNG where nonzero means true.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from gbweather.camera import CameraModel
from gbweather.color import decode_u8, encode_u8
from gbweather.errors import LoadError
from gbweather.gbuffer import GBufferFrame
from gbweather.pfm import read_pfm, write_pfm

MASK_NAMES = ("sky", "road", "vehicle", "streetlight")


@dataclass(frozen=True)
class SparseDepthPoint:
    u: float
    v: float
    depth: float  # meters (LiDAR-style ground truth)


def _resolve(base: Path, rel, channel: str, frame_idx: int) -> Path:
    path = base / rel
    if not path.is_file():
        raise LoadError(f"frame {frame_idx}: channel '{channel}' file not "
                        f"found: {path}")
    return path


def _load_float(path: Path, channel: str, frame_idx: int) -> np.ndarray:
    try:
        return read_pfm(path)
    except LoadError as e:
        raise LoadError(f"frame {frame_idx}: channel '{channel}': {e}") from e


def _load_color(path: Path, channel: str, frame_idx: int) -> np.ndarray:
    """Color raster: PFM is taken as linear, PNG/8-bit as sRGB."""
    if path.suffix.lower() == ".pfm":
        img = _load_float(path, channel, frame_idx)
        if img.ndim != 3:
            raise LoadError(f"frame {frame_idx}: channel '{channel}' must be "
                            f"3-channel, got shape {img.shape} ({path})")
        return img.astype(np.float64)
    arr = np.asarray(Image.open(path).convert("RGB"))
    return decode_u8(arr)


def _load_mask(path: Path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"))
    return arr > 0


def load_sparse_points(path) -> list[SparseDepthPoint]:
    """Parse a text file of "u v d" lines."""
    points = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise LoadError(f"{path}:{lineno}: expected 'u v d', got {line!r}")
        u, v, d = (float(p) for p in parts)
        if d <= 0:
            raise LoadError(f"{path}:{lineno}: non-positive depth {d}")
        points.append(SparseDepthPoint(u, v, d))
    return points


def load_sequence(manifest_path):
    """Load a manifest into (frames, cameras, sparse_points_per_frame).

    Every returned frame satisfies the GBufferFrame invariants (normals
    renormalized, materials clamped); any inconsistency raises LoadError
    naming the offending path and channel.
    """
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except FileNotFoundError as e:
        raise LoadError(f"manifest not found: {manifest_path}") from e
    except json.JSONDecodeError as e:
        raise LoadError(f"{manifest_path}: invalid JSON: {e}") from e

    base = manifest_path.parent
    entries = doc.get("frames")
    if not entries:
        raise LoadError(f"{manifest_path}: manifest has no frames")
    fps = float(doc.get("fps", 30.0))
    if fps <= 0:
        raise LoadError(f"{manifest_path}: fps must be positive")

    frames, cameras, sparse = [], [], []
    for idx, entry in enumerate(entries):
        cam_spec = entry.get("camera")
        if cam_spec is None:
            raise LoadError(f"frame {idx}: missing camera entry")
        cam = CameraModel(K=np.reshape(cam_spec["K"], (3, 3)),
                          R=np.reshape(cam_spec["R"], (3, 3)),
                          t=np.asarray(cam_spec["t"], dtype=np.float64),
                          frame_interval=1.0 / fps)

        depth = _load_float(_resolve(base, entry["depth"], "depth", idx),
                            "depth", idx).astype(np.float64)
        if depth.ndim != 2:
            raise LoadError(f"frame {idx}: channel 'depth' must be scalar, "
                            f"got shape {depth.shape}")
        h, w = depth.shape

        normal = _load_float(_resolve(base, entry["normal"], "normal", idx),
                             "normal", idx).astype(np.float64)
        albedo = _load_color(_resolve(base, entry["albedo"], "albedo", idx),
                             "albedo", idx)
        roughness = _load_float(_resolve(base, entry["roughness"], "roughness", idx),
                                "roughness", idx).astype(np.float64)
        metallic = _load_float(_resolve(base, entry["metallic"], "metallic", idx),
                               "metallic", idx).astype(np.float64)

        masks = {}
        mask_spec = entry.get("masks", {})
        for name in MASK_NAMES:
            if name in mask_spec:
                masks[name] = _load_mask(
                    _resolve(base, mask_spec[name], f"masks.{name}", idx))
            else:
                masks[name] = np.zeros((h, w), dtype=bool)

        image = None
        if "image" in entry:
            image = _load_color(_resolve(base, entry["image"], "image", idx),
                                "image", idx)

        frame = GBufferFrame(width=w, height=h, depth=depth, normal=normal,
                             albedo=albedo, roughness=roughness,
                             metallic=metallic, sky_mask=masks["sky"],
                             road_mask=masks["road"],
                             vehicle_mask=masks["vehicle"],
                             streetlight_mask=masks["streetlight"],
                             image=image)
        frame.renormalize_normals()
        frame.clamp_materials()
        frame.validate(context=f"frame {idx}")
        if image is not None and image.shape != (h, w, 3):
            raise LoadError(f"frame {idx}: channel 'image' has shape "
                            f"{image.shape}, expected {(h, w, 3)}")

        pts = []
        if "sparse_depth" in entry:
            pts = load_sparse_points(
                _resolve(base, entry["sparse_depth"], "sparse_depth", idx))
        elif idx == 0 and "sparse_depth" in doc:
            pts = load_sparse_points(
                _resolve(base, doc["sparse_depth"], "sparse_depth", idx))
        for p in pts:
            if not (0 <= p.u < w and 0 <= p.v < h):
                raise LoadError(f"frame {idx}: sparse point ({p.u}, {p.v}) "
                                f"outside {w}x{h} frame")

        frames.append(frame)
        cameras.append(cam)
        sparse.append(pts)

    return frames, cameras, sparse


def save_frame(rgb_linear, path, linear_dump_path=None) -> None:
    """Write a linear raster as an 8-bit sRGB PNG (plus optional PFM dump)."""
    rgb_linear = np.asarray(rgb_linear, dtype=np.float64)
    if not np.isfinite(rgb_linear).all():
        raise ValueError(f"non-finite pixel values, refusing to write {path}")
    u8 = encode_u8(rgb_linear)
    _write_png(u8, path)
    if linear_dump_path is not None:
        write_pfm(linear_dump_path, rgb_linear)


def save_srgb_frame(srgb, path) -> None:
    """Write an already display-referred raster in [0,1] as 8-bit PNG."""
    srgb = np.clip(np.asarray(srgb, dtype=np.float64), 0.0, 1.0)
    u8 = np.floor(srgb * 255.0 + 0.5).astype(np.uint8)
    _write_png(u8, path)


def save_mask(mask, path) -> None:
    """Write a boolean mask as an 8-bit PNG (255 = true)."""
    u8 = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(str(path))


def _write_png(u8, path):
    try:
        Image.fromarray(u8).save(str(path))
    except OSError as e:
        raise LoadError(f"cannot write image {path}: {e}") from e


def load_image_u8(path) -> np.ndarray:
    """Read an 8-bit image back as a uint8 array (test/verification helper)."""
    return np.asarray(Image.open(str(path)).convert("RGB"))
