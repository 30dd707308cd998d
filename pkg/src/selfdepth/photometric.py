"""Reprojection quality: SSIM, the per-pair loss, and the dynamic mask.

The per-pixel loss is (a/2)(1-ssim) + (1-a) L1; across several
synthesized views it reduces by per-pixel minimum, and a pixel only
counts where that minimum strictly beats the best un-warped source
(static / no-parallax pixels drop out).  The mask is a selection,
recomputed each call outside the gradient trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .geometry import Frame


@dataclass
class PhotometricConfig:
    alpha_ssim: float = 0.85  # SSIM share of the pair loss
    window: int = 3
    c1: float = 0.01**2  # stabilizers on the [0,1] intensity range
    c2: float = 0.03**2

    def __post_init__(self):
        if not 0.0 <= self.alpha_ssim <= 1.0:
            raise ContractError("alpha_ssim must lie in [0,1]")
        if self.window < 1 or self.window % 2 == 0:
            raise ContractError("SSIM window must be odd and >= 1")


def ssim(a, b, cfg: PhotometricConfig | None = None):
    """Per-pixel SSIM map [N,1,H,W], channel-averaged, box-filtered."""
    cfg = cfg or PhotometricConfig()
    a, b = T.as_tensor(a), T.as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"ssim operands differ: {a.shape} vs {b.shape}")
    w = cfg.window
    mu_a = T.box_filter(a, w)
    mu_b = T.box_filter(b, w)
    var_a = T.sub(T.box_filter(T.mul(a, a), w), T.mul(mu_a, mu_a))
    var_b = T.sub(T.box_filter(T.mul(b, b), w), T.mul(mu_b, mu_b))
    cov = T.sub(T.box_filter(T.mul(a, b), w), T.mul(mu_a, mu_b))
    num = T.mul(
        T.add(T.mul(T.mul(mu_a, mu_b), 2.0), cfg.c1), T.add(T.mul(cov, 2.0), cfg.c2)
    )
    den = T.mul(
        T.add(T.add(T.mul(mu_a, mu_a), T.mul(mu_b, mu_b)), cfg.c1),
        T.add(T.add(var_a, var_b), cfg.c2),
    )
    return T.tmean(T.div(num, den), axis=1, keepdims=True)


def pair_loss(target, synthesized, cfg: PhotometricConfig | None = None):
    """Per-pixel photometric loss map [N,1,H,W] for one view pair."""
    cfg = cfg or PhotometricConfig()
    target, synthesized = T.as_tensor(target), T.as_tensor(synthesized)
    if target.shape != synthesized.shape:
        raise ShapeError(
            f"pair_loss operands differ: {target.shape} vs {synthesized.shape}"
        )
    l1 = T.tmean(T.absolute(T.sub(target, synthesized)), axis=1, keepdims=True)
    if cfg.alpha_ssim == 0.0:
        return l1
    ssim_term = T.mul(T.sub(1.0, ssim(target, synthesized, cfg)), cfg.alpha_ssim / 2.0)
    return T.add(ssim_term, T.mul(l1, 1.0 - cfg.alpha_ssim))


_BIG = 1e9  # sentinel for invalid pixels before the per-pixel minimum


def masked_photometric_loss(
    target: Frame,
    synthesized: list,
    sources: list,
    cfg: PhotometricConfig | None = None,
):
    """Minimum-over-views loss under the dynamic mask.

    ``synthesized`` is a list of (image tensor, validity mask) pairs as
    produced by view synthesis, aligned with ``sources``.  Returns
    (scalar loss, mask ndarray [1,1,H,W]) where the mask is 1 exactly
    where the best warped loss strictly beats the best un-warped source
    loss.  The mean runs over valid pixels (those covered by at least
    one view).
    """
    cfg = cfg or PhotometricConfig()
    if not synthesized:
        raise ContractError("masked_photometric_loss needs at least one view")
    per_view = []
    for img, valid in synthesized:
        loss_map = pair_loss(target.image, img, cfg)
        fill = T.Tensor(np.where(valid, 0.0, _BIG).astype(loss_map.data.dtype))
        per_view.append(T.add(loss_map, fill))
    min_warped = per_view[0]
    for view in per_view[1:]:
        min_warped = T.minimum(min_warped, view)
    with T.pause_recording():
        identity = [pair_loss(target.image, s.image, cfg).data for s in sources]
    min_identity = np.minimum.reduce(identity) if identity else np.full_like(
        min_warped.data, _BIG
    )
    valid_any = min_warped.data < _BIG / 2
    mu = (min_warped.data < min_identity) & valid_any
    count = int(valid_any.sum())
    if count == 0:
        raise ContractError("no valid pixels survive warping")
    sel = T.Tensor(mu.astype(min_warped.data.dtype))
    loss = T.div(T.tsum(T.mul(min_warped, sel)), float(count))
    return loss, mu.astype(np.float32)
