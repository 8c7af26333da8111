"""sRGB <-> linear transfer functions and small color helpers.

The exact IEC 61966-2-1 piecewise curve is used (not the gamma-2.2
approximation); linear-space blending elsewhere in the pipeline depends
on it.  All functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import numpy as np

# Rec.709 / sRGB luminance weights for linear RGB.
LUMA_709 = np.array([0.2126, 0.7152, 0.0722])

_SRGB_CUT = 0.04045
_LINEAR_CUT = 0.0031308


def srgb_to_linear(c):
    """Decode sRGB in [0,1] to linear light. Out-of-range input is clamped."""
    c = np.clip(np.asarray(c, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= _SRGB_CUT, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    """Encode linear light in [0,1] to sRGB. Out-of-range input is clamped."""
    c = np.clip(np.asarray(c, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= _LINEAR_CUT, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def encode_u8(linear_rgb):
    """Linear raster -> 8-bit sRGB with round-half-up quantization."""
    srgb = linear_to_srgb(linear_rgb)
    return np.floor(srgb * 255.0 + 0.5).astype(np.uint8)


def decode_u8(u8):
    """8-bit sRGB -> linear float raster."""
    return srgb_to_linear(np.asarray(u8, dtype=np.float64) / 255.0)


def luminance(rgb):
    """Rec.709 luminance of a (..., 3) linear RGB array."""
    return np.asarray(rgb, dtype=np.float64) @ LUMA_709
