"""Snow Geometry Pass: metaball height field, material blending, wet
ground, and persistent falling particles.

Surface buildup evaluates an SPH Poly6 kernel over cascaded support
radii, restricted to the k nearest metaball centers; coverage drives a
sigmoid material blend toward snow.  Thawed road areas use a porosity
darkening model.  Particles advance with constant gravity+wind drift
and respawn at the top of a frustum-aligned bounding box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree

from gbweather.noise import hash01, smoothstep, fbm

# Cascade defaults.
CASCADE_LEVELS = 3
CASCADE_DECAY = 0.7
BASE_RADIUS = 0.5
RADIUS_RATIO = 1.5
KNN = 16

# Material blend defaults.
BLEND_W = 0.8
BLEND_TAU = 0.03
COVERAGE_GAMMA = 0.9
SNOW_ALBEDO = 1.0
SNOW_ROUGHNESS = 0.6
SLOPE_CLAMP = 1.0          # tan(45 deg)
UP_DOT_MIN = 0.5

# Wet ground defaults.
WET_POROSITY = 0.8
WET_INTENSITY = 0.5
WATER_ALBEDO = 0.02
WATER_ROUGHNESS = 0.1

# Falling snow defaults.
PARTICLE_COUNT = 6000
V_GRAVITY = np.array([0.0, -2.0, 0.0])
V_WIND = np.array([0.3, 0.0, 0.1])
FLAKE_RADIUS_M = 0.02
FLAKE_ALPHA = 0.7
MIN_DISC_RADIUS_PX = 0.5


def poly6(r, rho):
    """SPH Poly6 kernel: 315/(64 pi rho^9) (rho^2 - r^2)^3 inside support."""
    if rho <= 0:
        raise ValueError(f"support radius must be positive, got {rho}")
    r = np.asarray(r, dtype=np.float64)
    norm = 315.0 / (64.0 * math.pi * rho ** 9)
    diff = rho * rho - r * r
    return np.where((r >= 0) & (r < rho), norm * diff ** 3, 0.0)


def poly6_dr(r, rho):
    """Radial derivative: -945/(32 pi rho^9) r (rho^2 - r^2)^2 on (0, rho)."""
    if rho <= 0:
        raise ValueError(f"support radius must be positive, got {rho}")
    r = np.asarray(r, dtype=np.float64)
    norm = -945.0 / (32.0 * math.pi * rho ** 9)
    diff = rho * rho - r * r
    return np.where((r > 0) & (r < rho), norm * r * diff ** 2, 0.0)


def sigmoid_blend(x, w=BLEND_W, tau_bias=BLEND_TAU):
    """Weighted sigmoid 1/(1 + exp(-w (x - tau)))."""
    return 1.0 / (1.0 + np.exp(-w * (np.asarray(x, dtype=np.float64) - tau_bias)))


@dataclass
class MetaballField:
    """Snow accumulation centers with cascade parameters."""

    centers: np.ndarray                       # (N, 3) world
    densities: np.ndarray                     # (N,) in [0.8, 1.2]
    levels: int = CASCADE_LEVELS
    decay: float = CASCADE_DECAY
    rho0: float = BASE_RADIUS
    xi: float = RADIUS_RATIO
    k: int = KNN
    _tree: cKDTree | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 3)
        self.densities = np.asarray(self.densities, dtype=np.float64).reshape(-1)
        if self.levels < 1 or not (0 < self.decay <= 1) or self.rho0 <= 0 \
                or self.xi <= 1 or self.k < 1:
            raise ValueError("invalid metaball cascade parameters")

    def query(self, x):
        """k nearest centers per query point, ties broken by center index.

        Returns (dist, idx) arrays of shape (P, k'), k' = min(N, k).
        """
        n = self.centers.shape[0]
        if n == 0:
            return None, None
        if self._tree is None:
            self._tree = cKDTree(self.centers)
        # query a few extra neighbors so index tie-breaking is canonical
        kq = min(n, self.k + 8)
        dist, idx = self._tree.query(np.atleast_2d(x), k=kq)
        dist = np.atleast_2d(dist)
        idx = np.atleast_2d(idx)
        order = np.lexsort((idx, dist), axis=-1)
        dist = np.take_along_axis(dist, order, axis=-1)
        idx = np.take_along_axis(idx, order, axis=-1)
        kk = min(n, self.k)
        return dist[:, :kk], idx[:, :kk]


def snow_height(x, field: MetaballField):
    """Cascaded metaball height at world points x (..., 3)."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, 3)
    out = np.zeros(flat.shape[0])
    dist, idx = field.query(flat)
    if dist is None:
        return out.reshape(x.shape[:-1])
    amp = field.densities[idx]
    for level in range(field.levels):
        rho_l = field.rho0 / field.xi ** level
        out += field.decay ** level * (amp * poly6(dist, rho_l)).sum(axis=-1)
    return out.reshape(x.shape[:-1])


def snow_height_gradient(x, field: MetaballField):
    """(height, gradient) of the cascaded field at world points x."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, 3)
    h = np.zeros(flat.shape[0])
    g = np.zeros_like(flat)
    dist, idx = field.query(flat)
    if dist is None:
        return h.reshape(x.shape[:-1]), g.reshape(x.shape)
    amp = field.densities[idx]
    offset = flat[:, None, :] - field.centers[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(dist[..., None] > 0, offset / dist[..., None], 0.0)
    for level in range(field.levels):
        rho_l = field.rho0 / field.xi ** level
        lam = field.decay ** level
        h += lam * (amp * poly6(dist, rho_l)).sum(axis=-1)
        g += lam * ((amp * poly6_dr(dist, rho_l))[..., None]
                    * direction).sum(axis=-2)
    return h.reshape(x.shape[:-1]), g.reshape(x.shape)


def seed_metaball_centers(world_points, up, density_per_100m2=200.0, seed=0,
                          **cascade):
    """Stratified blue-noise subsampling of surface points into centers.

    One candidate survives per world-XZ grid cell (the one nearest the
    cell's hashed target), so the result is independent of the order
    and count of the input points.  Densities come from a per-cell hash.
    """
    pts = np.asarray(world_points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        return MetaballField(centers=np.empty((0, 3)), densities=np.empty(0),
                             **cascade)
    up = np.asarray(up, dtype=np.float64)
    up = up / np.linalg.norm(up)
    # two horizontal axes spanning the ground plane
    a = np.cross(up, [0.0, 0.0, 1.0])
    if np.linalg.norm(a) < 1e-6:
        a = np.cross(up, [1.0, 0.0, 0.0])
    a /= np.linalg.norm(a)
    b = np.cross(up, a)

    cell = math.sqrt(100.0 / density_per_100m2)
    xs = pts @ a
    zs = pts @ b
    ix = np.floor(xs / cell).astype(np.int64)
    iz = np.floor(zs / cell).astype(np.int64)
    tx = (ix + hash01(ix, iz, seed=seed)) * cell
    tz = (iz + hash01(ix, iz, seed=seed + 1)) * cell
    err = (xs - tx) ** 2 + (zs - tz) ** 2

    best: dict[tuple, int] = {}
    for i, key in enumerate(zip(ix.tolist(), iz.tolist())):
        j = best.get(key)
        if j is None or err[i] < err[j] or (err[i] == err[j] and i < j):
            best[key] = i
    keep = sorted(best.items())
    idx = np.array([i for _, i in keep], dtype=np.int64)
    kx = np.array([k[0] for k, _ in keep], dtype=np.int64)
    kz = np.array([k[1] for k, _ in keep], dtype=np.int64)
    densities = 0.8 + 0.4 * hash01(kx, kz, seed=seed + 2)
    return MetaballField(centers=pts[idx], densities=densities, **cascade)


def apply_snow_material(frame, coverage, gamma=COVERAGE_GAMMA,
                        snow_normal_cam=None, allowed=None):
    """Blend materials toward snow by c = coverage**gamma, in place.

    Albedo lerps to 1.0, roughness to 0.6, metallic to 0.  Sky pixels
    are never touched.  When snow_normal_cam (H, W, 3) is given, normals
    lerp toward it by c and renormalize.  `allowed` restricts the edit
    (upward-facing test, computed by the caller).
    """
    coverage = np.clip(np.asarray(coverage, dtype=np.float64), 0.0, 1.0)
    active = coverage > 0
    active &= ~frame.sky_mask
    if allowed is not None:
        active &= allowed
    if not active.any():
        return
    c = np.zeros_like(coverage)
    c[active] = coverage[active] ** gamma

    cc = c[..., None]
    frame.albedo = frame.albedo + (SNOW_ALBEDO - frame.albedo) * cc
    frame.roughness = frame.roughness + (SNOW_ROUGHNESS - frame.roughness) * c
    frame.metallic = frame.metallic * (1.0 - c)
    if snow_normal_cam is not None:
        blended = frame.normal + (snow_normal_cam - frame.normal) * cc
        norm = np.linalg.norm(blended, axis=-1, keepdims=True)
        ok = norm[..., 0] > 1e-8
        frame.normal = np.where((active & ok)[..., None], blended / np.where(norm > 1e-8, norm, 1.0),
                                frame.normal)
    frame.clamp_materials()


def apply_wet_ground(frame, intensity=WET_INTENSITY, porosity=WET_POROSITY,
                     water_albedo=WATER_ALBEDO, tau_opt=0.0, mu=None,
                     water_roughness=WATER_ROUGHNESS, exclude=None):
    """Thawed-road darkening: porosity albedo model + roughness lerp.

    Applied to road pixels not excluded (e.g. snow-covered ones).  mu is
    the per-pixel view-angle cosine; with the default optical depth of
    zero it cancels out.
    """
    mask = frame.road_mask.copy()
    mask &= ~frame.sky_mask
    if exclude is not None:
        mask &= ~exclude
    if not mask.any():
        return
    if mu is None:
        attn = 1.0 if tau_opt == 0 else math.exp(-tau_opt)
        attn = np.full(int(mask.sum()), attn)
    else:
        m = np.clip(np.asarray(mu, dtype=np.float64)[mask], 1e-3, 1.0)
        attn = np.exp(-tau_opt / m)
    a_dry = frame.albedo[mask]
    frame.albedo[mask] = a_dry * (1.0 - porosity) \
        + water_albedo * porosity * attn[..., None]
    r_dry = frame.roughness[mask]
    frame.roughness[mask] = r_dry * (1.0 - intensity) + water_roughness * intensity
    frame.clamp_materials()


# -- falling particles -------------------------------------------------------

@dataclass
class ParticleSet:
    """Persistent world-space precipitation state with a private RNG."""

    positions: np.ndarray          # (N, 3)
    radii: np.ndarray              # (N,)
    velocities: np.ndarray         # (N, 3)
    bounds_min: np.ndarray         # (3,)
    bounds_max: np.ndarray         # (3,)
    rng: np.random.Generator

    @classmethod
    def spawn(cls, count=PARTICLE_COUNT, bounds_min=(-15, 0, -30),
              bounds_max=(15, 12, 0), radius_m=FLAKE_RADIUS_M,
              v_wind=V_WIND, seed=0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A0]))
        lo = np.asarray(bounds_min, dtype=np.float64)
        hi = np.asarray(bounds_max, dtype=np.float64)
        pos = lo + rng.random((count, 3)) * (hi - lo)
        vel = np.tile(V_GRAVITY + np.asarray(v_wind, dtype=np.float64),
                      (count, 1))
        return cls(positions=pos, radii=np.full(count, radius_m),
                   velocities=vel, bounds_min=lo, bounds_max=hi, rng=rng)


def step_snow_particles(ps: ParticleSet, dt, collide_fn=None):
    """Advance positions by velocity * dt; respawn leavers at the top.

    collide_fn(points) -> bool mask marks particles that hit the depth
    surface.  Respawned particles keep their velocity, so trajectories
    between respawns are straight lines.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return
    ps.positions = ps.positions + ps.velocities * dt
    out = ((ps.positions < ps.bounds_min) | (ps.positions > ps.bounds_max)).any(axis=1)
    if collide_fn is not None:
        out |= collide_fn(ps.positions)
    n_out = int(out.sum())
    if n_out:
        lateral = ps.rng.random((n_out, 2))
        ps.positions[out, 0] = ps.bounds_min[0] + lateral[:, 0] \
            * (ps.bounds_max[0] - ps.bounds_min[0])
        ps.positions[out, 2] = ps.bounds_min[2] + lateral[:, 1] \
            * (ps.bounds_max[2] - ps.bounds_min[2])
        ps.positions[out, 1] = ps.bounds_max[1]


def make_radius_px_fn(cam, world_radius=FLAKE_RADIUS_M,
                      min_px=MIN_DISC_RADIUS_PX):
    """Pixel radius = focal * world_radius / depth, floored for visibility."""
    focal = 0.5 * (cam.K[0, 0] + cam.K[1, 1])

    def radius_px(depth):
        return np.maximum(focal * world_radius / np.maximum(depth, 1e-6),
                          min_px)
    return radius_px


def rasterize_particles(frame, cam, ps: ParticleSet, radius_px_fn=None,
                        color=(1.0, 1.0, 1.0), alpha=FLAKE_ALPHA):
    """Composite soft discs into the frame's alpha overlay.

    Only pixels where the particle is nearer than the frame depth are
    written; off-screen and behind-camera particles are skipped.
    Composition follows particle index order (over operator).
    """
    overlay = frame.ensure_overlay()
    h, w = frame.depth.shape
    pts_cam = cam.world_to_camera(ps.positions)
    uv, z = cam.project(pts_cam)
    visible = (z > 1e-6)
    visible &= (uv[:, 0] > -64) & (uv[:, 0] < w + 64)
    visible &= (uv[:, 1] > -64) & (uv[:, 1] < h + 64)
    order = np.flatnonzero(visible)
    radius = np.zeros(len(ps.positions))
    if radius_px_fn is not None:
        radius[order] = radius_px_fn(z[order])
    else:
        focal = 0.5 * (cam.K[0, 0] + cam.K[1, 1])
        radius[order] = np.maximum(focal * ps.radii[order] / z[order],
                                   MIN_DISC_RADIUS_PX)
    color = np.asarray(color, dtype=np.float64)

    for i in order:
        _stamp_disc(overlay, frame.depth, uv[i], z[i], radius[i], color, alpha)


def _stamp_disc(overlay, depth, uv, z, r_px, color, alpha):
    h, w = depth.shape
    u0 = int(math.floor(uv[0] - r_px))
    u1 = int(math.ceil(uv[0] + r_px)) + 1
    v0 = int(math.floor(uv[1] - r_px))
    v1 = int(math.ceil(uv[1] + r_px)) + 1
    u0, u1 = max(u0, 0), min(u1, w)
    v0, v1 = max(v0, 0), min(v1, h)
    if u0 >= u1 or v0 >= v1:
        return
    uu, vv = np.meshgrid(np.arange(u0, u1), np.arange(v0, v1))
    d2 = (uu - uv[0]) ** 2 + (vv - uv[1]) ** 2
    falloff = np.maximum(0.0, 1.0 - d2 / (r_px * r_px))
    front = z < depth[v0:v1, u0:u1]
    a = np.where(front, alpha * falloff, 0.0)
    if not (a > 0).any():
        return
    patch = overlay[v0:v1, u0:u1]
    one_m = (1.0 - patch[..., 3:4])
    patch[..., :3] += a[..., None] * color * one_m
    patch[..., 3] += a * one_m[..., 0]


# -- pass orchestration -------------------------------------------------------

def ground_pattern_weight(world_xz_a, world_xz_b, scale_per_m=0.2, low=0.35,
                          high=0.65, seed=0):
    """Value-noise snow-vs-wet selector over world ground coordinates."""
    n = fbm(world_xz_a * scale_per_m, world_xz_b * scale_per_m, octaves=3,
            seed=seed)
    # fbm with 3 octaves spans about [0, 7/8]; rescale before windowing
    return smoothstep(low, high, n / 0.875)


def snow_coverage(frame, cam, field: MetaballField, up_world,
                  w=BLEND_W, tau_bias=BLEND_TAU, up_dot_min=UP_DOT_MIN,
                  pattern=None):
    """Per-pixel snow coverage and the world-space field gradient.

    Returns (coverage, grad_world, upward_mask).  Coverage is zero off
    upward-facing or sky pixels; road pixels are modulated by the
    ground pattern when given.
    """
    up_world = np.asarray(up_world, dtype=np.float64)
    up_world = up_world / np.linalg.norm(up_world)
    n_world = frame.normal @ cam.R.T
    upward = (n_world @ up_world) > up_dot_min
    upward &= ~frame.sky_mask

    coverage = np.zeros(frame.depth.shape)
    grad = np.zeros(frame.depth.shape + (3,))
    if not upward.any() or field.centers.shape[0] == 0:
        return coverage, grad, upward

    vs, us = np.nonzero(upward)
    uv = np.stack([us, vs], axis=-1).astype(np.float64)
    pts_world = cam.camera_to_world(cam.unproject(uv, frame.depth[vs, us]))
    h, g = snow_height_gradient(pts_world, field)
    c = sigmoid_blend(h, w=w, tau_bias=tau_bias)
    if pattern is not None:
        road_sel = frame.road_mask[vs, us]
        c = np.where(road_sel, c * pattern(pts_world), c)
    coverage[vs, us] = c
    grad[vs, us] = g
    return coverage, grad, upward


def snow_target_normals(frame, cam, grad_world, up_world,
                        slope_clamp=SLOPE_CLAMP):
    """Camera-space normals of the snow surface implied by the gradient.

    The horizontal (tangent) part of the height gradient tilts the up
    axis; its magnitude is clamped to the configured slope.
    """
    up_world = np.asarray(up_world, dtype=np.float64)
    up_world = up_world / np.linalg.norm(up_world)
    tangent = grad_world - (grad_world @ up_world)[..., None] * up_world
    mag = np.linalg.norm(tangent, axis=-1, keepdims=True)
    factor = np.where(mag > slope_clamp, slope_clamp / np.where(mag > 0, mag, 1.0), 1.0)
    tangent = tangent * factor
    n_world = up_world - tangent
    n_world /= np.linalg.norm(n_world, axis=-1, keepdims=True)
    return n_world @ cam.R
