"""Local-texture disambiguation losses.

An image I factors into reflectance and illumination, I = R * L.  The
illumination map is pushed toward a smooth, structure-following field
(clamped fidelity + edge-weighted smoothness), depth is smoothed where
illumination is flat, the reflectance must reconstruct the image, and
structure/texture feature channels are pushed toward orthogonality
(per-channel cosines plus Gram-matrix cosine, both squared).

Stop-gradient rules: the depth map inside the illumination loss, and
the illumination map inside the edge-aware and reflectance losses, are
evaluated forward-only.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .imgio import write_pgm16, write_ppm
from .photometric import PhotometricConfig, ssim

_EPS_NORM = 1e-8


def illumination_loss(image, illum, depth, alpha_vclamp: float = 0.2):
    """Clamped fidelity plus smoothness weighted by structure edges.

    mean(max(channel-mean |I - L|, alpha)) +
    mean(|grad L| * exp(-|grad sg(D)| - |grad I|)); the depth gradient is
    excluded from backprop.
    """
    image, illum, depth = T.as_tensor(image), T.as_tensor(illum), T.as_tensor(depth)
    if (illum.data <= 0).any():
        raise ContractError("illumination map must be strictly positive")
    fidelity = T.tmean(
        T.maximum_scalar(
            T.tmean(T.absolute(T.sub(image, illum)), axis=1, keepdims=True),
            alpha_vclamp,
        )
    )
    weight = T.exp(
        T.mul(
            T.add(
                T.gradient_magnitude(T.stop_gradient(depth)),
                T.gradient_magnitude(image),
            ),
            -1.0,
        )
    )
    smooth = T.tmean(T.mul(T.gradient_magnitude(illum), weight))
    return T.add(fidelity, smooth)


def edge_aware_loss(depth, illum):
    """mean(|grad D| * exp(-|grad sg(L)|)); illumination gradient frozen."""
    depth, illum = T.as_tensor(depth), T.as_tensor(illum)
    weight = T.exp(T.mul(T.gradient_magnitude(T.stop_gradient(illum)), -1.0))
    return T.tmean(T.mul(T.gradient_magnitude(depth), weight))


def reflectance_loss(reflect, illum, image, cfg: PhotometricConfig | None = None):
    """(1 - ssim(R * sg(L), I)) / 2, zero at perfect reconstruction."""
    reflect, illum, image = T.as_tensor(reflect), T.as_tensor(illum), T.as_tensor(image)
    recon = T.mul(reflect, T.stop_gradient(illum))
    return T.tmean(T.mul(T.sub(1.0, ssim(recon, image, cfg)), 0.5))


def gram(features):
    """Gram matrix of [C,M] features, normalized by M, row-major flattened."""
    features = T.as_tensor(features)
    if len(features.shape) != 2:
        raise ShapeError(f"gram expects [C,M], got {list(features.shape)}")
    c, m = features.shape
    g = T.div(T.matmul(features, T.transpose2d(features)), float(m))
    return T.reshape(g, (c * c,))


def _row_cosines(a, b):
    # per-row cosine; zero-norm rows contribute 0 via the norm floor
    dots = T.tsum(T.mul(a, b), axis=1)
    na = T.maximum_scalar(T.sqrt(T.tsum(T.mul(a, a), axis=1)), _EPS_NORM)
    nb = T.maximum_scalar(T.sqrt(T.tsum(T.mul(b, b), axis=1)), _EPS_NORM)
    return T.div(dots, T.mul(na, nb))


def cosine_similarity(u, v):
    """Cosine between two flat vectors with an epsilon norm floor."""
    u, v = T.as_tensor(u), T.as_tensor(v)
    return T.reshape(
        _row_cosines(T.reshape(u, (1, u.size)), T.reshape(v, (1, v.size))), ()
    )


def orthogonality_loss(feat_a, feat_b):
    """Squared-cosine decoupling penalty, in [0, 2].

    Mean over channels of cos^2(a_c, b_c) plus cos^2 of the vectorized
    Gram matrices; squaring makes anti-alignment as costly as alignment,
    so the minimum is genuine orthogonality.
    """
    feat_a, feat_b = T.as_tensor(feat_a), T.as_tensor(feat_b)
    if feat_a.shape != feat_b.shape:
        raise ShapeError(
            f"orthogonality_loss expects equal shapes, got {feat_a.shape} vs {feat_b.shape}"
        )
    channel = T.tmean(T.power(_row_cosines(feat_a, feat_b), 2.0))
    gram_cos = cosine_similarity(gram(feat_a), gram(feat_b))
    return T.add(channel, T.power(gram_cos, 2.0))


def export_maps(illum, reflect, illum_path, reflect_path) -> None:
    """Write the decomposition for inspection: 16-bit PGM + 8-bit PPM."""
    il = np.asarray(T.as_tensor(illum).data)[0, 0]
    write_pgm16(illum_path, il)
    rf = np.asarray(T.as_tensor(reflect).data)[0]
    write_ppm(reflect_path, rf)
