"""Pinhole camera model, rigid poses, and differentiable view synthesis.

The synthesis pipeline is backproject -> rigid transform + project ->
bilinear warp.  Poses used for learning are axis-angle + translation
vectors exponentiated to a rotation on every forward pass, which keeps
orthonormality by construction; ground-truth poses are plain numpy
:class:`SE3Pose` values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError

Z_MIN = 1e-3  # perspective-division guard, scene units


@dataclass
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ContractError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ContractError("principal point must lie inside the image")

    @classmethod
    def default(cls, width: int, height: int) -> "Intrinsics":
        return cls(
            fx=0.8 * width,
            fy=0.8 * width,
            cx=(width - 1) / 2.0,
            cy=(height - 1) / 2.0,
            width=width,
            height=height,
        )


@dataclass
class SE3Pose:
    rotation: np.ndarray  # 3x3, orthonormal
    translation: np.ndarray  # 3

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ShapeError("SE3Pose expects a 3x3 rotation and a 3-vector")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-6 or abs(np.linalg.det(self.rotation) - 1.0) > 1e-6:
            raise ContractError(f"rotation is not orthonormal (err={err:.2e})")

    @classmethod
    def identity(cls) -> "SE3Pose":
        return cls(np.eye(3), np.zeros(3))

    def scaled_translation(self, s: float) -> "SE3Pose":
        return SE3Pose(self.rotation.copy(), self.translation * s)

    def inverse(self) -> "SE3Pose":
        rt = self.rotation.T
        return SE3Pose(rt.copy(), -rt @ self.translation)


class TensorPose:
    """Differentiable rigid pose (rotation / translation tensors)."""

    def __init__(self, rotation: T.Tensor, translation: T.Tensor):
        self.rotation = rotation  # [3,3]
        self.translation = translation  # [3] or [3,1]

    def to_se3(self) -> SE3Pose:
        return SE3Pose(
            np.asarray(self.rotation.data, dtype=np.float64),
            np.asarray(self.translation.data, dtype=np.float64).reshape(3),
        )


def _as_tensor_pose(pose) -> TensorPose:
    if isinstance(pose, TensorPose):
        return pose
    return TensorPose(T.Tensor(pose.rotation), T.Tensor(pose.translation))


@dataclass
class Frame:
    image: T.Tensor  # [1,3,H,W] in [0,1]
    intrinsics: Intrinsics
    index: int = 0

    def __post_init__(self):
        if not isinstance(self.image, T.Tensor):
            self.image = T.Tensor(self.image)
        shape = self.image.shape
        if len(shape) != 4 or shape[0] != 1 or shape[1] != 3:
            raise ShapeError(f"Frame image must be [1,3,H,W], got {list(shape)}")
        if shape[2] != self.intrinsics.height or shape[3] != self.intrinsics.width:
            raise ShapeError("Frame size does not match intrinsics")
        data = self.image.data
        if not np.isfinite(data).all() or data.min() < 0 or data.max() > 1:
            raise ContractError("Frame pixels must be finite and within [0,1]")


def se3_exp(axis_angle: T.Tensor, translation: T.Tensor) -> TensorPose:
    """Rodrigues exponential of an axis-angle 3-vector, differentiable.

    The sin/cos coefficients are series in theta^2 below a cutoff so the
    map stays smooth and finite at zero rotation (the pose net's initial
    output).
    """
    r = T.reshape(axis_angle, (3,))
    s = T.tsum(T.mul(r, r))  # theta^2, smooth in r
    small = s.data < 1e-8
    s_safe = T.maximum_scalar(s, 1e-12)
    theta = T.sqrt(s_safe)
    # A = sin(t)/t, B = (1-cos(t))/t^2, both analytic in t^2
    series_a = T.add(T.mul(s, -1.0 / 6.0), 1.0)
    series_b = T.add(T.mul(s, -1.0 / 24.0), 0.5)
    coeff_a = T.where(small, series_a, T.div(T.sin(theta), theta))
    coeff_b = T.where(small, series_b, T.div(T.sub(1.0, T.cos(theta)), s_safe))
    zero = T.mul(s, 0.0)
    rx, ry, rz = (T.reshape(T.getitem(r, i), (1,)) for i in range(3))
    z1 = T.reshape(zero, (1,))
    k = T.reshape(
        T.concat([z1, -rz, ry, rz, z1, -rx, -ry, rx, z1]), (3, 3)
    )
    k2 = T.matmul(k, k)
    eye = T.Tensor(np.eye(3, dtype=k.data.dtype))
    rot = T.add(eye, T.add(T.mul(coeff_a, k), T.mul(coeff_b, k2)))
    return TensorPose(rot, T.reshape(translation, (3, 1)))


def _pixel_grid(intrinsics: Intrinsics, dtype):
    u, v = np.meshgrid(
        np.arange(intrinsics.width, dtype=dtype),
        np.arange(intrinsics.height, dtype=dtype),
    )
    return u, v


def backproject(depth: T.Tensor, intrinsics: Intrinsics) -> T.Tensor:
    """Lift a depth map [1,1,H,W] to camera-space points [1,3,H,W]."""
    depth = T.as_tensor(depth)
    if len(depth.shape) != 4 or depth.shape[1] != 1:
        raise ShapeError(f"backproject expects depth [1,1,H,W], got {list(depth.shape)}")
    bad = int((depth.data <= 0).sum())
    if bad:
        raise ContractError(f"backproject requires positive depth; {bad} pixels violate")
    u, v = _pixel_grid(intrinsics, depth.data.dtype)
    rays = np.stack(
        [
            (u - intrinsics.cx) / intrinsics.fx,
            (v - intrinsics.cy) / intrinsics.fy,
            np.ones_like(u),
        ]
    )[None]
    return T.mul(depth, T.Tensor(rays))


def project(points: T.Tensor, pose, intrinsics: Intrinsics):
    """Rigidly move points [1,3,H,W] and project to pixel coordinates.

    Returns (coords [1,2,H,W], validity mask ndarray [1,1,H,W]); the mask
    is false behind the camera (z <= Z_MIN) and outside the image bounds.
    Invalid coordinates are masked, never raised.
    """
    pose = _as_tensor_pose(pose)
    _, _, h, w = points.shape
    m = h * w
    flat = T.reshape(points, (3, m))
    moved = T.add(T.matmul(pose.rotation, flat), T.reshape(pose.translation, (3, 1)))
    x = T.getitem(moved, (slice(0, 1),))
    y = T.getitem(moved, (slice(1, 2),))
    z = T.getitem(moved, (slice(2, 3),))
    z_safe = T.maximum_scalar(z, Z_MIN)
    u = T.add(T.mul(T.div(x, z_safe), intrinsics.fx), intrinsics.cx)
    v = T.add(T.mul(T.div(y, z_safe), intrinsics.fy), intrinsics.cy)
    coords = T.reshape(T.concat([u, v], axis=0), (1, 2, h, w))
    eps = 1e-6  # keeps exact-border pixels valid under fp round-off
    mask = (
        (z.data > Z_MIN)
        & (u.data >= -eps)
        & (u.data <= intrinsics.width - 1 + eps)
        & (v.data >= -eps)
        & (v.data <= intrinsics.height - 1 + eps)
    ).reshape(1, 1, h, w)
    return coords, mask


def warp(source: T.Tensor, pixel_coords: T.Tensor, mask: np.ndarray) -> T.Tensor:
    """Bilinearly sample source at pixel_coords; invalid pixels become 0."""
    sampled = T.grid_sample(source, pixel_coords)
    return T.mul(sampled, T.Tensor(mask.astype(source.data.dtype)))


def synthesize_view(source: Frame, depth: T.Tensor, pose):
    """Reconstruct the target view from a source frame, depth, and pose.

    Composition backproject -> project -> warp; returns the synthesized
    image [1,3,H,W] and the validity mask [1,1,H,W].
    """
    points = backproject(depth, source.intrinsics)
    coords, mask = project(points, pose, source.intrinsics)
    return warp(source.image, coords, mask), mask
