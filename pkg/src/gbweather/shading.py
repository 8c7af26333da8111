"""Light Pass: Cook-Torrance shading under a spotlight rig plus the
parametric night tone path (LUT, adaptive exposure, sky darkening).

The specular term uses the GGX distribution with Smith height-
correlated visibility, formulated so the 4(n.wo)(n.wi) denominator
cancels analytically, and Schlick Fresnel with F0 = lerp(0.04, albedo,
metallic).  The Fresnel cosine is computed from the symmetric
expression (1 + wi.wo)/|wi + wo| so reciprocity holds bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from gbweather.color import luminance

INV_SQUARE_EPS = 1e-4      # m^2, floor in the inverse-square falloff
VIS_EPS = 1e-9

# Night path defaults.
EXPOSURE_PERCENTILE = 70.0
EXPOSURE_TARGET = 0.22
EXPOSURE_CLIP = (0.6, 1.6)
SKY_ALPHA = 0.6
SKY_DILATE_PX = 20
SKY_BLUR_SIGMA = 10.0


@dataclass
class BRDFSample:
    n: np.ndarray
    w_i: np.ndarray
    w_o: np.ndarray
    albedo: np.ndarray
    roughness: float
    metallic: float


def brdf_eval(n, w_i, w_o, albedo, roughness, metallic):
    """Cook-Torrance reflectance for unit direction arrays (..., 3).

    Returns linear RGB with the diffuse lobe (albedo/pi)(1 - metallic)
    plus D*V*F specular; nonnegative everywhere, finite at grazing.
    """
    n = np.asarray(n, dtype=np.float64)
    w_i = np.asarray(w_i, dtype=np.float64)
    w_o = np.asarray(w_o, dtype=np.float64)
    albedo = np.asarray(albedo, dtype=np.float64)
    roughness = np.asarray(roughness, dtype=np.float64)
    metallic = np.asarray(metallic, dtype=np.float64)

    nl = np.maximum((n * w_i).sum(axis=-1), 0.0)
    nv = np.maximum((n * w_o).sum(axis=-1), 0.0)

    half = w_i + w_o
    half_norm = np.linalg.norm(half, axis=-1)
    degenerate = half_norm < 1e-9
    safe_norm = np.where(degenerate, 1.0, half_norm)
    h = half / safe_norm[..., None]
    nh = np.clip((n * h).sum(axis=-1), 0.0, 1.0)
    # symmetric in (w_i, w_o): wi.h == wo.h == (1 + wi.wo)/|wi + wo|
    cos_ih = np.clip((1.0 + (w_i * w_o).sum(axis=-1)) / safe_norm, 0.0, 1.0)

    alpha = roughness * roughness
    a2 = alpha * alpha
    denom = nh * nh * (a2 - 1.0) + 1.0
    d_ggx = a2 / (np.pi * denom * denom)

    lam_o = nl * np.sqrt(nv * nv * (1.0 - a2) + a2)
    lam_i = nv * np.sqrt(nl * nl * (1.0 - a2) + a2)
    vis = 0.5 / (lam_o + lam_i + VIS_EPS)

    f0 = 0.04 + (albedo - 0.04) * metallic[..., None]
    fresnel = f0 + (1.0 - f0) * (1.0 - cos_ih[..., None]) ** 5

    spec = (d_ggx * vis)[..., None] * fresnel
    spec = np.where(degenerate[..., None], 0.0, spec)
    diffuse = albedo / np.pi * (1.0 - metallic)[..., None]
    return np.maximum(diffuse + spec, 0.0)


def brdf_eval_sample(s: BRDFSample):
    return brdf_eval(s.n, s.w_i, s.w_o, s.albedo, s.roughness, s.metallic)


def spot_attenuation(light, x):
    """Combined angular and distance window A = S * W in [0, 1].

    S is the squared smooth cone falloff (clamped to 1 inside the inner
    cone); W is the quartic distance window vanishing at r_max.  The
    inverse-square term lives in the radiance aggregation, not here.
    """
    x = np.asarray(x, dtype=np.float64)
    offset = x - light.position
    dist = np.linalg.norm(offset, axis=-1)
    safe = np.where(dist > 0, dist, 1.0)
    cos_theta = (offset @ light.direction) / safe
    s_lin = (cos_theta - light.cos_outer) / (light.cos_inner - light.cos_outer)
    s = np.clip(s_lin, 0.0, 1.0) ** 2
    w = np.maximum(0.0, 1.0 - (dist / light.r_max) ** 4) ** 2
    return s * w


def shade_local(frame, cam, lights):
    """Sum spotlight radiance over the edited G-buffer, sky excluded.

    Returns an (H, W, 3) linear radiance raster; zero with an empty rig
    and exactly additive in the light list.
    """
    h, w = frame.depth.shape
    radiance = np.zeros((h, w, 3))
    if not lights:
        return radiance
    active = ~frame.sky_mask
    if not active.any():
        return radiance
    vs, us = np.nonzero(active)
    uv = np.stack([us, vs], axis=-1).astype(np.float64)
    p_cam = cam.unproject(uv, frame.depth[vs, us])
    w_o = -p_cam / np.linalg.norm(p_cam, axis=-1, keepdims=True)
    n = frame.normal[vs, us]
    albedo = frame.albedo[vs, us]
    rough = frame.roughness[vs, us]
    metal = frame.metallic[vs, us]
    p_world = cam.camera_to_world(p_cam)

    total = np.zeros((vs.size, 3))
    for light in lights:
        offset = p_world - light.position
        dist = np.linalg.norm(offset, axis=-1)
        near = dist < light.r_max
        if not near.any():
            continue
        atten = spot_attenuation(light, p_world[near])
        l_cam = cam.world_to_camera(light.position)
        to_light = l_cam - p_cam[near]
        w_i = to_light / np.linalg.norm(to_light, axis=-1, keepdims=True)
        nl = np.maximum((n[near] * w_i).sum(axis=-1), 0.0)
        li = light.intensity * (atten / (dist[near] ** 2 + INV_SQUARE_EPS))[..., None]
        f = brdf_eval(n[near], w_i, w_o[near], albedo[near], rough[near],
                      metal[near])
        total[near] += f * li * nl[..., None]
    radiance[vs, us] = total
    return radiance


# -- nocturnal tone path ------------------------------------------------------

@dataclass
class NightLUT:
    table: np.ndarray             # (256, 3) float in [0, 255]
    sigma: float


def build_night_lut(sigma) -> NightLUT:
    """Parametric night tone table over 8-bit intensities.

    beta = 0.7 + 0.2(1 - sigma) scales overall brightness; per-channel
    factors (0.85 - 0.15 s, 0.9 - 0.1 s, 1.05 + 0.2 s) shift toward
    cool blue as sigma rises.
    """
    if not 0.0 <= sigma <= 1.0:
        raise ValueError(f"lut sigma must be in [0, 1], got {sigma}")
    i = np.arange(256, dtype=np.float64)
    beta = 0.7 + 0.2 * (1.0 - sigma)
    table = np.stack([
        np.clip(beta * i * (0.85 - 0.15 * sigma), 0.0, 255.0),
        np.clip(beta * i * (0.90 - 0.10 * sigma), 0.0, 255.0),
        np.clip(beta * i * (1.05 + 0.20 * sigma), 0.0, 255.0),
    ], axis=-1)
    return NightLUT(table=table, sigma=float(sigma))


def apply_lut(lut: NightLUT, srgb):
    """Apply the LUT per channel to an sRGB raster in [0, 1].

    Float inputs interpolate linearly between integer table indices.
    """
    x = np.clip(np.asarray(srgb, dtype=np.float64), 0.0, 1.0) * 255.0
    i0 = np.floor(x).astype(np.int64)
    i1 = np.minimum(i0 + 1, 255)
    frac = x - i0
    out = np.empty_like(x)
    for c in range(3):
        t = lut.table[:, c]
        out[..., c] = t[i0[..., c]] * (1.0 - frac[..., c]) \
            + t[i1[..., c]] * frac[..., c]
    return out / 255.0


def adaptive_exposure(rgb, sigma, percentile=EXPOSURE_PERCENTILE,
                      target=EXPOSURE_TARGET, clip=EXPOSURE_CLIP,
                      eps=1e-6):
    """Linear-space gain toward a target percentile luminance, in place.

    gain = (0.98 - 0.20 sigma) * clip(target / (L_p + eps)); highlight
    compression C' = C / (1 + 0.25 C) follows.
    """
    lum = luminance(rgb)
    l_p = float(np.quantile(lum, percentile / 100.0, method="nearest"))
    gain = (0.98 - 0.20 * sigma) * float(np.clip(target / (l_p + eps),
                                                 clip[0], clip[1]))
    rgb *= gain
    rgb /= 1.0 + 0.25 * rgb
    return rgb


def soft_sky_mask(sky_mask, dilate_px=SKY_DILATE_PX, blur_sigma=SKY_BLUR_SIGMA):
    """Euclidean dilation then Gaussian blur, clipped to [0, 1]."""
    dist = ndimage.distance_transform_edt(~np.asarray(sky_mask, dtype=bool))
    dilated = (dist <= dilate_px).astype(np.float64)
    soft = ndimage.gaussian_filter(dilated, sigma=blur_sigma, mode="nearest",
                                   truncate=3.0)
    return np.clip(soft, 0.0, 1.0)


def darken_sky(rgb, sky_mask, alpha_sky=SKY_ALPHA, dilate_px=SKY_DILATE_PX,
               blur_sigma=SKY_BLUR_SIGMA):
    """Scale pixels toward alpha_sky inside the softened sky mask, in place."""
    soft = soft_sky_mask(sky_mask, dilate_px=dilate_px, blur_sigma=blur_sigma)
    rgb *= (1.0 - soft * (1.0 - alpha_sky))[..., None]
    return rgb
