"""Portable Float Map I/O.

"PF" (color) / "Pf" (grayscale) header, width/height line, then a scale
line whose sign encodes endianness; scanlines run bottom-to-top.  Files
written here are little-endian 32-bit (scale -1.0), which makes the
round trip bit-exact.
"""

from __future__ import annotations

import numpy as np

from gbweather.errors import LoadError


def _read_token(f, path):
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise LoadError(f"{path}: truncated PFM header")
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_pfm(path) -> np.ndarray:
    """Load a PFM file as (H, W) or (H, W, 3) float32, row 0 at the top."""
    path = str(path)
    with open(path, "rb") as f:
        magic = _read_token(f, path)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise LoadError(f"{path}: not a PFM file (magic {magic!r})")
        try:
            width = int(_read_token(f, path))
            height = int(_read_token(f, path))
            scale = float(_read_token(f, path))
        except ValueError as e:
            raise LoadError(f"{path}: malformed PFM header: {e}") from e
        if width <= 0 or height <= 0:
            raise LoadError(f"{path}: invalid PFM dimensions {width}x{height}")
        count = width * height * channels
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(count * 4), dtype=dtype)
        if data.size != count:
            raise LoadError(f"{path}: PFM payload truncated "
                            f"({data.size}/{count} floats)")
    data = data.astype(np.float32)
    if channels == 3:
        img = data.reshape(height, width, 3)
    else:
        img = data.reshape(height, width)
    return img[::-1].copy()  # stored bottom-to-top


def write_pfm(path, image: np.ndarray) -> None:
    """Write an (H, W) or (H, W, 3) array as little-endian PFM."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        magic = b"Pf"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError(f"PFM images must be (H,W) or (H,W,3), got {image.shape}")
    h, w = image.shape[:2]
    with open(str(path), "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(image[::-1].astype("<f4").tobytes())
