"""Rain Geometry Pass: world-anchored puddles, drop kinematics, streak
rasterization, procedural ripples, and wet-material response.

Puddle boundaries come from FBM value noise evaluated on world ground
coordinates (never screen space), so they stick to the road across
camera motion.  Drops fall at their Gunn-Kinzer terminal velocity and
are drawn as depth-tested uneven-capsule SDFs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gbweather.color import luminance
from gbweather.noise import fbm, hash01, smoothstep
from gbweather.snow import apply_wet_ground

# Drop population defaults.
DROP_COUNT = 10_000
DIAMETER_MM = (0.5, 6.0)
WIND_BASE = (0.1, 0.0, 0.0)
WIND_SIGMA = 0.5
SPAWN_HEIGHT_M = (0.0, 51.0)

# Streak rendering defaults.
STREAK_ALPHA = 0.4
DEPTH_BIAS_M = 1e-4
STREAK_LENGTH_FACTOR = 0.8
TAPER = 0.7
CHUNK = 256
MIN_STREAK_RADIUS_PX = 0.5
STREAK_COLOR = (0.78, 0.82, 0.88)

# Puddle noise defaults.
PUDDLE_OCTAVES = 3
PUDDLE_SCALE_PER_M = 0.05
PUDDLE_EXPONENT = 1.0     # "power redistribution with a unit exponent"

# Ripple defaults.
RIPPLE_CELL_PX = 32
RIPPLE_FREQ_RAD_PER_M = 31.0
RIPPLE_INTENSITY = (0.01, 0.15)
RIPPLE_BLEND = 0.9
RIPPLE_WINDOW = (-0.6, 0.0)
RIPPLE_SPEED_M_S = 1.0
RIPPLE_MOD_HZ = 1.0
CREST_FRACTION = 0.1
CREST_TINT = (0.92, 0.96, 1.00)

# Sky / wetness response.
SKY_TINT = (0.55, 0.60, 0.70)
SKY_TINT_STRENGTH = 0.6
SKY_DESATURATION = 0.7
GLOBAL_WETNESS = 0.2


def terminal_velocity(diameter_mm):
    """Raindrop terminal fall speed (m/s), exponential fit to the
    Gunn-Kinzer measurements: 9.65 - 10.3 exp(-0.6 D), clamped at 0."""
    d = np.asarray(diameter_mm, dtype=np.float64)
    return np.maximum(0.0, 9.65 - 10.3 * np.exp(-0.6 * d))


def fbm_world(xw, zw, octaves=PUDDLE_OCTAVES, scale_per_m=PUDDLE_SCALE_PER_M,
              seed=0, corner_fn=None):
    """FBM evaluated on lateral world coordinates at a physical scale."""
    return fbm(np.asarray(xw, dtype=np.float64) * scale_per_m,
               np.asarray(zw, dtype=np.float64) * scale_per_m,
               octaves=octaves, seed=seed, corner_fn=corner_fn)


@dataclass
class PuddleField:
    weights: np.ndarray            # (H, W) in [0, 1], zero off the road
    seed: int = 0


def puddle_weight_from_noise(n, exponent=PUDDLE_EXPONENT):
    """Cascaded smoothstep thresholds (0, 0.7) then (0.2, 1.0)."""
    n = np.asarray(n, dtype=np.float64) ** exponent
    return smoothstep(0.2, 1.0, smoothstep(0.0, 0.7, n))


def puddle_mask(frame, cam, octaves=PUDDLE_OCTAVES,
                scale_per_m=PUDDLE_SCALE_PER_M, exponent=PUDDLE_EXPONENT,
                seed=0) -> PuddleField:
    """Soft puddle mask over road pixels, anchored in world space."""
    weights = np.zeros(frame.depth.shape)
    vs, us = np.nonzero(frame.road_mask & ~frame.sky_mask)
    if vs.size:
        uv = np.stack([us, vs], axis=-1).astype(np.float64)
        pts = cam.camera_to_world(cam.unproject(uv, frame.depth[vs, us]))
        n = fbm_world(pts[:, 0], pts[:, 2], octaves=octaves,
                      scale_per_m=scale_per_m, seed=seed)
        weights[vs, us] = puddle_weight_from_noise(n, exponent=exponent)
    return PuddleField(weights=weights, seed=seed)


# -- drop kinematics ----------------------------------------------------------

@dataclass
class RaindropSet:
    """Drop population state; wind is resampled per drop at (re)spawn."""

    positions: np.ndarray          # (N, 3) world
    diameters: np.ndarray          # (N,) mm
    wind: np.ndarray               # (N, 2) horizontal wind (x, z)
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    rng: np.random.Generator
    diam_range: tuple = DIAMETER_MM
    spawn_height: tuple = SPAWN_HEIGHT_M
    wind_base: tuple = WIND_BASE
    wind_sigma: float = WIND_SIGMA

    @classmethod
    def spawn(cls, count=DROP_COUNT, bounds_min=(-15, 0, -40),
              bounds_max=(15, 51, 10), diam_range=DIAMETER_MM,
              wind_base=WIND_BASE, wind_sigma=WIND_SIGMA,
              spawn_height=SPAWN_HEIGHT_M, seed=0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA14]))
        lo = np.asarray(bounds_min, dtype=np.float64)
        hi = np.asarray(bounds_max, dtype=np.float64)
        pos = np.empty((count, 3))
        pos[:, 0] = lo[0] + rng.random(count) * (hi[0] - lo[0])
        pos[:, 2] = lo[2] + rng.random(count) * (hi[2] - lo[2])
        pos[:, 1] = lo[1] + spawn_height[0] \
            + rng.random(count) * (spawn_height[1] - spawn_height[0])
        diam = diam_range[0] + rng.random(count) * (diam_range[1] - diam_range[0])
        wind = np.stack([wind_base[0] + rng.normal(0.0, wind_sigma, count),
                         wind_base[2] + rng.normal(0.0, wind_sigma, count)],
                        axis=-1)
        return cls(positions=pos, diameters=diam, wind=wind, bounds_min=lo,
                   bounds_max=hi, rng=rng, diam_range=diam_range,
                   spawn_height=spawn_height, wind_base=wind_base,
                   wind_sigma=wind_sigma)

    @property
    def velocities(self):
        """(N, 3) velocity: horizontal wind, vertical terminal equilibrium."""
        v = np.empty_like(self.positions)
        v[:, 0] = self.wind[:, 0]
        v[:, 1] = -terminal_velocity(self.diameters)
        v[:, 2] = self.wind[:, 1]
        return v

    def respawn(self, mask):
        n = int(mask.sum())
        if n == 0:
            return
        lo, hi = self.bounds_min, self.bounds_max
        self.positions[mask, 0] = lo[0] + self.rng.random(n) * (hi[0] - lo[0])
        self.positions[mask, 2] = lo[2] + self.rng.random(n) * (hi[2] - lo[2])
        self.positions[mask, 1] = lo[1] + self.spawn_height[0] \
            + self.rng.random(n) * (self.spawn_height[1] - self.spawn_height[0])
        self.diameters[mask] = self.diam_range[0] + self.rng.random(n) \
            * (self.diam_range[1] - self.diam_range[0])
        self.wind[mask, 0] = self.wind_base[0] + self.rng.normal(0.0, self.wind_sigma, n)
        self.wind[mask, 1] = self.wind_base[2] + self.rng.normal(0.0, self.wind_sigma, n)


def step_raindrops(drops: RaindropSet, dt, collide_fn=None):
    """Advance drops one frame; collided or exited drops respawn."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return
    drops.positions = drops.positions + drops.velocities * dt
    out = ((drops.positions < drops.bounds_min)
           | (drops.positions > drops.bounds_max)).any(axis=1)
    if collide_fn is not None:
        out |= collide_fn(drops.positions)
    drops.respawn(out)


# -- streak SDF ---------------------------------------------------------------

def capsule_axis(p, head, tail):
    """Distance to the head-tail segment and the clamped axis parameter t."""
    p = np.asarray(p, dtype=np.float64)
    head = np.asarray(head, dtype=np.float64)
    tail = np.asarray(tail, dtype=np.float64)
    axis = tail - head
    len_sq = float(axis @ axis)
    if len_sq < 1e-18:
        d = np.linalg.norm(p - head, axis=-1)
        return d, np.zeros(d.shape)
    t = np.clip(((p - head) @ axis) / len_sq, 0.0, 1.0)
    closest = head + t[..., None] * axis
    return np.linalg.norm(p - closest, axis=-1), t


def capsule_sdf(p, head, tail, r_head, taper=TAPER):
    """Uneven-capsule SDF: axis distance minus a radius interpolated
    linearly from r_head at the head to r_head/taper at the tail."""
    d, t = capsule_axis(p, head, tail)
    r = r_head + t * (r_head / taper - r_head)
    return d - r


def rasterize_raindrops(frame, cam, drops: RaindropSet, dt,
                        alpha=STREAK_ALPHA, depth_bias=DEPTH_BIAS_M,
                        color=STREAK_COLOR, chunk=CHUNK,
                        length_factor=STREAK_LENGTH_FACTOR, taper=TAPER):
    """Composite depth-tested streaks into the frame's alpha overlay.

    Each drop spans a world streak of length length_factor * dt * |v|
    trailing its instantaneous velocity.  Pixels inside the projected
    capsule whose interpolated drop depth is nearer than the frame
    depth (plus bias) receive alpha-blended color; drops are processed
    in fixed chunks whose order matches drop index order.
    """
    overlay = frame.ensure_overlay()
    h, w = frame.depth.shape
    vel = drops.velocities
    speed = np.linalg.norm(vel, axis=-1)
    lengths = length_factor * dt * speed
    with np.errstate(invalid="ignore", divide="ignore"):
        vhat = np.where(speed[:, None] > 0, vel / speed[:, None], 0.0)
    heads_w = drops.positions
    tails_w = heads_w - vhat * lengths[:, None]

    head_cam = cam.world_to_camera(heads_w)
    tail_cam = cam.world_to_camera(tails_w)
    uv_h, z_h = cam.project(head_cam)
    uv_t, z_t = cam.project(tail_cam)
    focal = 0.5 * (cam.K[0, 0] + cam.K[1, 1])

    candidates = (z_h > 1e-6) & (z_t > 1e-6)
    r_world = drops.diameters * 0.5e-3
    r_px = np.zeros_like(z_h)
    np.divide(focal * r_world, z_h, out=r_px, where=candidates)
    r_px = np.maximum(r_px, MIN_STREAK_RADIUS_PX)
    pad = r_px / taper + 1.0
    lo_u = np.minimum(uv_h[:, 0], uv_t[:, 0]) - pad
    hi_u = np.maximum(uv_h[:, 0], uv_t[:, 0]) + pad
    lo_v = np.minimum(uv_h[:, 1], uv_t[:, 1]) - pad
    hi_v = np.maximum(uv_h[:, 1], uv_t[:, 1]) + pad
    candidates &= (hi_u > 0) & (lo_u < w) & (hi_v > 0) & (lo_v < h)

    color = np.asarray(color, dtype=np.float64)
    indices = np.flatnonzero(candidates)
    for start in range(0, indices.size, chunk):
        for i in indices[start:start + chunk]:
            _stamp_streak(overlay, frame.depth,
                          uv_h[i], uv_t[i], z_h[i], z_t[i], r_px[i],
                          (int(lo_u[i]), int(hi_u[i]) + 1,
                           int(lo_v[i]), int(hi_v[i]) + 1),
                          alpha, depth_bias, color, taper)


def _stamp_streak(overlay, depth, uv_h, uv_t, z_h, z_t, r_px, bbox,
                  alpha, depth_bias, color, taper):
    h, w = depth.shape
    u0, u1, v0, v1 = bbox
    u0, u1 = max(u0, 0), min(u1, w)
    v0, v1 = max(v0, 0), min(v1, h)
    if u0 >= u1 or v0 >= v1:
        return
    uu, vv = np.meshgrid(np.arange(u0, u1, dtype=np.float64),
                         np.arange(v0, v1, dtype=np.float64))
    pix = np.stack([uu, vv], axis=-1)
    d, t = capsule_axis(pix, uv_h, uv_t)
    r = r_px + t * (r_px / taper - r_px)
    inside = d < r
    if not inside.any():
        return
    drop_depth = z_h + t * (z_t - z_h)
    visible = inside & (drop_depth < depth[v0:v1, u0:u1] + depth_bias)
    if not visible.any():
        return
    a = np.where(visible, alpha, 0.0)
    patch = overlay[v0:v1, u0:u1]
    one_m = 1.0 - patch[..., 3:4]
    patch[..., :3] += a[..., None] * color * one_m
    patch[..., 3] += a * one_m[..., 0]


# -- surface perturbation -----------------------------------------------------

def apply_ripples(frame, cam, puddles: PuddleField, t,
                  cell_px=RIPPLE_CELL_PX, freq=RIPPLE_FREQ_RAD_PER_M,
                  intensity=RIPPLE_INTENSITY, blend=RIPPLE_BLEND,
                  speed=RIPPLE_SPEED_M_S, mod_hz=RIPPLE_MOD_HZ,
                  crest_fraction=CREST_FRACTION, seed=0):
    """Perturb normals with expanding ring waves inside puddles, in place.

    Each cell_px x cell_px screen cell hosts one ring source at a
    hashed pixel; the wave slope tilts the surface normal along the
    world radial direction with temporally modulated intensity, and
    crest pixels tint the albedo toward white.
    """
    weights = puddles.weights
    vs, us = np.nonzero(weights > 0)
    if vs.size == 0:
        return
    h, w = frame.depth.shape

    cell_u = us // cell_px
    cell_v = vs // cell_px
    # per-cell ring origin pixel (hashed), clamped into the frame
    cu = np.minimum((cell_u * cell_px
                     + np.floor(hash01(cell_u, cell_v, seed) * cell_px)
                     ).astype(np.int64), w - 1)
    cv = np.minimum((cell_v * cell_px
                     + np.floor(hash01(cell_u, cell_v, seed + 1) * cell_px)
                     ).astype(np.int64), h - 1)
    phase0 = hash01(cell_u, cell_v, seed + 2) * 2.0 * math.pi
    phase_mod = hash01(cell_u, cell_v, seed + 3) * 2.0 * math.pi

    uv = np.stack([us, vs], axis=-1).astype(np.float64)
    pts = cam.camera_to_world(cam.unproject(uv, frame.depth[vs, us]))
    cuv = np.stack([cu, cv], axis=-1).astype(np.float64)
    centers = cam.camera_to_world(cam.unproject(cuv, frame.depth[cv, cu]))

    offset = pts - centers
    r = np.linalg.norm(offset, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        radial = np.where(r[:, None] > 1e-9, offset / r[:, None], 0.0)
    window = smoothstep(RIPPLE_WINDOW[0], RIPPLE_WINDOW[1], -r)
    lo, hi = intensity
    amp = lo + (hi - lo) * 0.5 * (1.0 + np.sin(2.0 * math.pi * mod_hz * t
                                               + phase_mod))
    phase = freq * (r - speed * t) + phase0

    n_world = frame.normal[vs, us] @ cam.R.T
    tangent = radial - (radial * n_world).sum(axis=-1, keepdims=True) * n_world
    slope = (amp * window * np.cos(phase))[:, None] * tangent
    rippled = n_world + slope
    rippled /= np.linalg.norm(rippled, axis=-1, keepdims=True)
    mix = (blend * weights[vs, us])[:, None]
    blended = n_world + (rippled - n_world) * mix
    blended /= np.linalg.norm(blended, axis=-1, keepdims=True)
    frame.normal[vs, us] = blended @ cam.R

    crest = (np.sin(phase) >= math.cos(crest_fraction * math.pi)) & (window > 0)
    if crest.any():
        strength = (weights[vs, us] * window)[crest][:, None]
        sel_v, sel_u = vs[crest], us[crest]
        tint = np.asarray(CREST_TINT)
        frame.albedo[sel_v, sel_u] += (tint - frame.albedo[sel_v, sel_u]) * strength
        frame.clamp_materials()


def apply_rain_materials(frame, puddles: PuddleField,
                         wetness=GLOBAL_WETNESS):
    """Material response: overcast sky tint, road wetness, mirror puddles."""
    sky = frame.sky_mask
    if sky.any():
        a = frame.albedo[sky]
        lum = luminance(a)[..., None]
        desat = a + (lum - a) * SKY_DESATURATION
        tint = np.asarray(SKY_TINT)
        frame.albedo[sky] = desat + (tint - desat) * SKY_TINT_STRENGTH

    apply_wet_ground(frame, intensity=wetness)
    road = frame.road_mask & ~frame.sky_mask
    if road.any():
        w = puddles.weights[road]
        frame.roughness[road] = frame.roughness[road] * (1.0 - w)
    frame.clamp_materials()
