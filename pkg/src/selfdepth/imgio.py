"""Binary PPM/PGM image I/O and a small depth colormap.

Images cross this boundary as float arrays in [0,1] (PPM: [3,H,W];
PGM: [H,W]); quantization to 8 or 16 bits happens here and is
deterministic.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError


def _quantize(arr, maxval):
    return np.clip(np.rint(np.clip(arr, 0.0, 1.0) * maxval), 0, maxval)


def write_ppm(path, image) -> None:
    """Write a [3,H,W] float image in [0,1] as binary 8-bit PPM."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ContractError(f"PPM expects [3,H,W], got {image.shape}")
    data = _quantize(image, 255).astype(np.uint8).transpose(1, 2, 0)
    with open(path, "wb") as f:
        f.write(f"P6\n{image.shape[2]} {image.shape[1]}\n255\n".encode())
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P6":
            raise ContractError(f"{path}: not a binary PPM")
        w, h = _read_header_dims(f)
        maxval = int(f.readline())
        raw = np.frombuffer(f.read(w * h * 3), dtype=np.uint8)
    return raw.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float32) / maxval


def write_pgm(path, image, maxval: int = 255) -> None:
    """Write a [H,W] float image in [0,1] as binary PGM (8- or 16-bit)."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ContractError(f"PGM expects [H,W], got {image.shape}")
    data = _quantize(image, maxval)
    payload = (
        data.astype(">u2").tobytes() if maxval > 255 else data.astype(np.uint8).tobytes()
    )
    with open(path, "wb") as f:
        f.write(f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode())
        f.write(payload)


def write_pgm16(path, image) -> None:
    write_pgm(path, image, maxval=65535)


def write_pgm8_raw(path, image_u8) -> None:
    """Write an already-quantized uint8 [H,W] array as binary PGM."""
    image_u8 = np.asarray(image_u8, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{image_u8.shape[1]} {image_u8.shape[0]}\n255\n".encode())
        f.write(image_u8.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise ContractError(f"{path}: not a binary PGM")
        w, h = _read_header_dims(f)
        maxval = int(f.readline())
        dtype = ">u2" if maxval > 255 else np.uint8
        raw = np.frombuffer(f.read(), dtype=dtype, count=w * h)
    return raw.reshape(h, w).astype(np.float32) / maxval


def _read_header_dims(f):
    line = f.readline()
    while line.startswith(b"#"):
        line = f.readline()
    w, h = (int(v) for v in line.split())
    return w, h


# Compact viridis-like anchors for depth rendering; high depth -> purple
# follows the convention used throughout the repo's montages.
_DEPTH_ANCHORS = np.array(
    [
        [0.993, 0.906, 0.144],
        [0.575, 0.844, 0.256],
        [0.208, 0.719, 0.472],
        [0.128, 0.567, 0.551],
        [0.211, 0.400, 0.554],
        [0.281, 0.156, 0.470],
        [0.267, 0.005, 0.329],
    ]
)


def depth_colormap(depth) -> np.ndarray:
    """Map a [H,W] depth array to a [3,H,W] color image in [0,1]."""
    depth = np.asarray(depth, dtype=np.float64)
    lo, hi = float(depth.min()), float(depth.max())
    t = np.zeros_like(depth) if hi - lo < 1e-12 else (depth - lo) / (hi - lo)
    pos = t * (len(_DEPTH_ANCHORS) - 1)
    idx = np.clip(pos.astype(int), 0, len(_DEPTH_ANCHORS) - 2)
    frac = (pos - idx)[..., None]
    rgb = _DEPTH_ANCHORS[idx] * (1 - frac) + _DEPTH_ANCHORS[idx + 1] * frac
    return rgb.transpose(2, 0, 1).astype(np.float32)
