"""Metric-scale recovery for relative depth.

Two routes: a scale/bias least-squares fit against sparse LiDAR-style
depth points (RANSAC-robust), and a monocular fallback that anchors a
RANSAC-fitted ground plane to the known physical camera height.  Sky
depth is repaired afterwards to the sequence-wide 99th percentile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gbweather.errors import CalibrationError

# Documented defaults; the paper names RANSAC without parameters.
SPARSE_INLIER_M = 0.5
SPARSE_ITERS = 100
PLANE_INLIER_M = 0.05
PLANE_ITERS = 200
SKY_PERCENTILE = 99.0
CAMERA_UP = np.array([0.0, -1.0, 0.0])  # camera-space up (+y is down)


@dataclass
class ScaleBias:
    s: float
    b: float
    inlier_count: int
    rms_error: float

    def __post_init__(self):
        if self.s <= 0:
            raise CalibrationError(f"calibration scale must be positive, got {self.s}")
        if self.rms_error < 0:
            raise CalibrationError("rms error cannot be negative")

    def apply(self, depth):
        return self.s * np.asarray(depth) + self.b


@dataclass
class GroundPlane:
    n: np.ndarray                    # unit normal, camera space
    inliers: np.ndarray              # indices into the fitted point set
    h_rel: float                     # unitless relative camera height
    rms_error: float = field(default=0.0)


def _lstsq_scale_bias(d_rel, d_ref):
    """Closed-form minimizer of mean squared (s*d_rel + b - d_ref)."""
    n = d_rel.size
    sd, sl = d_rel.sum(), d_ref.sum()
    sdd, sdl = (d_rel * d_rel).sum(), (d_rel * d_ref).sum()
    denom = n * sdd - sd * sd
    if abs(denom) < 1e-12 * max(1.0, sdd * n):
        raise CalibrationError("depth samples are rank-deficient "
                               "(all relative depths equal)")
    s = (n * sdl - sd * sl) / denom
    b = (sl - s * sd) / n
    return s, b


def fit_pairs(d_rel, d_ref, sample_n=1000, inlier_m=SPARSE_INLIER_M,
              iters=SPARSE_ITERS, rng=None) -> ScaleBias:
    """RANSAC scale/bias fit on matched (relative, metric) depth pairs."""
    d_rel = np.asarray(d_rel, dtype=np.float64).ravel()
    d_ref = np.asarray(d_ref, dtype=np.float64).ravel()
    if d_rel.size < 2:
        raise CalibrationError(f"need at least 2 depth pairs, got {d_rel.size}")
    if np.ptp(d_rel) < 1e-12:
        raise CalibrationError("depth samples are rank-deficient "
                               "(all relative depths equal)")
    rng = rng if rng is not None else np.random.default_rng(0)
    if d_rel.size > sample_n:
        keep = rng.choice(d_rel.size, size=sample_n, replace=False)
        d_rel, d_ref = d_rel[keep], d_ref[keep]

    best_inliers = None
    best_count = -1
    for _ in range(iters):
        i, j = rng.choice(d_rel.size, size=2, replace=False)
        if abs(d_rel[i] - d_rel[j]) < 1e-12:
            continue
        s = (d_ref[j] - d_ref[i]) / (d_rel[j] - d_rel[i])
        b = d_ref[i] - s * d_rel[i]
        resid = np.abs(s * d_rel + b - d_ref)
        inliers = resid < inlier_m
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None or best_count < 2:
        raise CalibrationError("RANSAC found no valid scale/bias consensus")

    s, b = _lstsq_scale_bias(d_rel[best_inliers], d_ref[best_inliers])
    resid = s * d_rel[best_inliers] + b - d_ref[best_inliers]
    rms = float(np.sqrt(np.mean(resid * resid)))
    return ScaleBias(s=s, b=b, inlier_count=best_count, rms_error=rms)


def fit_scale_bias(relative_depth, points, sample_n=1000,
                   inlier_m=SPARSE_INLIER_M, iters=SPARSE_ITERS,
                   rng=None, sky_mask=None) -> ScaleBias:
    """Fit (s, b) so that s*depth + b matches the sparse reference points.

    Points are matched to the raster at their nearest pixel; points on
    sky pixels are dropped.  Any supplied point whose residual survives
    RANSAC is treated as non-occluded.
    """
    relative_depth = np.asarray(relative_depth, dtype=np.float64)
    h, w = relative_depth.shape
    d_rel, d_ref = [], []
    for p in points:
        u = min(max(int(round(p.u)), 0), w - 1)
        v = min(max(int(round(p.v)), 0), h - 1)
        if sky_mask is not None and sky_mask[v, u]:
            continue
        d_rel.append(relative_depth[v, u])
        d_ref.append(p.depth)
    return fit_pairs(d_rel, d_ref, sample_n=sample_n, inlier_m=inlier_m,
                     iters=iters, rng=rng)


def fit_ground_plane(points, inlier_m=PLANE_INLIER_M, iters=PLANE_ITERS,
                     rng=None, up_hint=CAMERA_UP) -> GroundPlane:
    """RANSAC plane fit over camera-space points, 3-point minimal samples.

    The normal is flipped to have positive dot with up_hint; h_rel is
    the mean |n . P| over inliers (distance from the camera origin).
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] < 3:
        raise CalibrationError(f"need at least 3 points for a plane, "
                               f"got {points.shape[0]}")
    rng = rng if rng is not None else np.random.default_rng(0)

    best_mask = None
    best_count = -1
    for _ in range(iters):
        idx = rng.choice(points.shape[0], size=3, replace=False)
        p0, p1, p2 = points[idx]
        n = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            continue
        n = n / norm
        d0 = -n @ p0
        resid = np.abs(points @ n + d0)
        mask = resid < inlier_m
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    if best_mask is None or best_count < 3:
        raise CalibrationError("RANSAC found no valid ground plane")

    inlier_pts = points[best_mask]
    centroid = inlier_pts.mean(axis=0)
    cov = np.cov((inlier_pts - centroid).T)
    eigvals, eigvecs = np.linalg.eigh(cov)
    n = eigvecs[:, 0]
    if n @ up_hint < 0:
        n = -n
    d0 = -n @ centroid
    resid = inlier_pts @ n + d0
    rms = float(np.sqrt(np.mean(resid * resid)))
    h_rel = float(np.mean(np.abs(inlier_pts @ n)))
    return GroundPlane(n=n, inliers=np.flatnonzero(best_mask), h_rel=h_rel,
                       rms_error=rms)


def fit_camera_height_scale(frame, cam, camera_height_m, inlier_m=PLANE_INLIER_M,
                            iters=PLANE_ITERS, rng=None) -> ScaleBias:
    """Monocular fallback: s = H_cam / h_rel from a RANSAC road plane, b = 0.

    Bias is assumed zero to avoid an underdetermined fit.
    """
    if camera_height_m <= 0:
        raise CalibrationError("camera height must be positive")
    vs, us = np.nonzero(frame.road_mask)
    if vs.size < 3:
        raise CalibrationError(f"need at least 3 road pixels, got {vs.size}")
    uv = np.stack([us, vs], axis=-1).astype(np.float64)
    pts = cam.unproject(uv, frame.depth[vs, us])
    plane = fit_ground_plane(pts, inlier_m=inlier_m, iters=iters, rng=rng)
    if plane.h_rel <= 0:
        raise CalibrationError("degenerate ground plane (zero camera height)")
    return ScaleBias(s=camera_height_m / plane.h_rel, b=0.0,
                     inlier_count=int(plane.inliers.size),
                     rms_error=plane.rms_error)


def percentile_nearest_rank(values, pct) -> float:
    """Nearest-rank percentile (no interpolation), deterministic."""
    values = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if values.size == 0:
        raise CalibrationError("percentile of an empty set is undefined")
    rank = max(1, math.ceil(pct / 100.0 * values.size))
    return float(values[rank - 1])


def repair_sky_depth(frames, pct=SKY_PERCENTILE):
    """Set every sky pixel to the sequence-wide non-sky depth percentile.

    No-op when no frame has sky pixels; idempotent.  Returns the repair
    value or None.
    """
    if not any(f.sky_mask.any() for f in frames):
        return None
    non_sky = [f.depth[~f.sky_mask] for f in frames if (~f.sky_mask).any()]
    if not non_sky:
        raise CalibrationError("all pixels are sky; sky depth percentile "
                               "is undefined")
    value = percentile_nearest_rank(np.concatenate(non_sky), pct)
    for f in frames:
        f.depth[f.sky_mask] = value
    return value


def apply_scale_bias(frames, sb: ScaleBias) -> None:
    for f in frames:
        f.depth = sb.apply(f.depth)


def calibrate_sequence(frames, cameras, sparse_points, method="sparse",
                       camera_height_m=1.5, sample_n=1000, rng=None):
    """Run the chosen calibration over a loaded sequence, in place.

    Returns (ScaleBias, report dict).  Depth is scaled and sky repaired.
    """
    if method == "sparse":
        d_rel, d_ref = [], []
        for frame, pts in zip(frames, sparse_points):
            h, w = frame.depth.shape
            for p in pts:
                u = min(max(int(round(p.u)), 0), w - 1)
                v = min(max(int(round(p.v)), 0), h - 1)
                if frame.sky_mask[v, u]:
                    continue
                d_rel.append(frame.depth[v, u])
                d_ref.append(p.depth)
        sb = fit_pairs(d_rel, d_ref, sample_n=sample_n, rng=rng)
    elif method == "camera_height":
        sb = fit_camera_height_scale(frames[0], cameras[0], camera_height_m,
                                     rng=rng)
    elif method == "none":
        sb = ScaleBias(s=1.0, b=0.0, inlier_count=0, rms_error=0.0)
    else:
        raise CalibrationError(f"unknown calibration method {method!r}")

    if method != "none":
        apply_scale_bias(frames, sb)
    sky_value = repair_sky_depth(frames)
    report = {"s": sb.s, "b": sb.b, "inlier_count": sb.inlier_count,
              "rms_error": sb.rms_error, "method": method,
              "sky_depth_m": sky_value}
    return sb, report
