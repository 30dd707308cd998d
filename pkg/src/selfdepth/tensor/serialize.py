"""Tensor serialization: PFM for 2-D float maps, SCNT for arbitrary tensors.

PFM follows the usual portable-float-map convention: grayscale "Pf"
header, negative scale meaning little-endian, rows stored bottom-up.
SCNT is a tiny self-describing container: magic ``SCNT``, then
little-endian u32 version, u32 ndim, u32 dims, raw float32 payload in
C order.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import ContractError
from .core import Tensor

SCNT_MAGIC = b"SCNT"
SCNT_VERSION = 1


def write_pfm(path, array) -> None:
    arr = array.data if isinstance(array, Tensor) else np.asarray(array)
    arr = np.squeeze(arr)
    if arr.ndim != 2:
        raise ContractError(f"PFM stores 2-D maps, got shape {arr.shape}")
    arr = arr.astype("<f4")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{arr.shape[1]} {arr.shape[0]}\n".encode())
        f.write(b"-1.0\n")
        f.write(arr[::-1].tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ContractError(f"{path}: not a grayscale PFM file")
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        data = np.frombuffer(f.read(w * h * 4), dtype="<f4" if scale < 0 else ">f4")
    return np.ascontiguousarray(data.reshape(h, w)[::-1])


def write_scnt(path, array) -> None:
    arr = array.data if isinstance(array, Tensor) else np.asarray(array)
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as f:
        f.write(SCNT_MAGIC)
        f.write(struct.pack("<II", SCNT_VERSION, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def read_scnt(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(4) != SCNT_MAGIC:
            raise ContractError(f"{path}: bad SCNT magic")
        version, ndim = struct.unpack("<II", f.read(8))
        if version != SCNT_VERSION:
            raise ContractError(f"{path}: unsupported SCNT version {version}")
        dims = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
        payload = np.frombuffer(f.read(4 * int(np.prod(dims))), dtype="<f4")
    return np.ascontiguousarray(payload.reshape(dims))
