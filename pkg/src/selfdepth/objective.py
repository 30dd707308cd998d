"""Combined training objective, toggle semantics, and the Adam step.

The photometric term always runs; the texture-disambiguation toggle
(TI) adds illumination fidelity, reflectance reconstruction, and
feature orthogonality, and switches the edge-aware depth smoothness
from image-gradient weighting (the ablated baseline) to illumination-
gradient weighting.  The distillation toggle (SD) adds the graph
distillation term, with GP choosing the learnable projector versus raw
aggregation.  Scale-dependent terms average over the four depth scales.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .distill import FeatureNodes, distillation_loss
from .errors import ContractError, NonFiniteError
from .geometry import synthesize_view
from .models import (
    ModelBundle,
    forward_depth,
    forward_expert,
    forward_illumination,
    forward_pose,
    forward_reflectance,
    forward_texture,
)
from .photometric import PhotometricConfig, masked_photometric_loss
from .retinex import (
    edge_aware_loss,
    illumination_loss,
    orthogonality_loss,
    reflectance_loss,
)

log = logging.getLogger(__name__)


@dataclass
class LossWeights:
    lambda_p: float = 1.0
    lambda_v: float = 0.1
    lambda_e: float = 1.0
    lambda_r: float = 0.1
    lambda_o: float = 0.001
    lambda_d: float = 0.001

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if value < 0:
                raise ContractError(f"{name} must be non-negative")

    def as_dict(self):
        return {
            "lambda_p": self.lambda_p,
            "lambda_v": self.lambda_v,
            "lambda_e": self.lambda_e,
            "lambda_r": self.lambda_r,
            "lambda_o": self.lambda_o,
            "lambda_d": self.lambda_d,
        }


@dataclass
class Toggles:
    ti: bool = True
    sd: bool = True
    gp: bool = True


@dataclass
class LossBreakdown:
    p: float
    e: float
    v: float | None
    r: float | None
    o: float | None
    d: float | None
    total: float
    weights: LossWeights
    toggles: Toggles
    mu_fraction: float
    total_tensor: T.Tensor = field(repr=False, default=None)

    def terms(self) -> dict:
        out = {"p": self.p, "e": self.e}
        for k in ("v", "r", "o", "d"):
            val = getattr(self, k)
            if val is not None:
                out[k] = val
        return out


def _mean_scalars(values):
    acc = values[0]
    for v in values[1:]:
        acc = T.add(acc, v)
    return T.div(acc, float(len(values)))


def _term_value(tensor, name) -> float:
    value = float(tensor.data)
    if not np.isfinite(value):
        raise NonFiniteError(f"loss term '{name}' is non-finite")
    return value


def total_loss(
    bundle: ModelBundle,
    sample,
    weights: LossWeights | None = None,
    toggles: Toggles | None = None,
    photo_cfg: PhotometricConfig | None = None,
) -> LossBreakdown:
    """Evaluate the enabled loss terms and their weighted sum."""
    weights = weights or LossWeights()
    toggles = toggles or Toggles()
    photo_cfg = photo_cfg or PhotometricConfig()
    if not sample.sources:
        raise ContractError("sample needs at least one source frame")
    target = sample.target
    full_hw = (target.image.shape[2], target.image.shape[3])

    depths, s_feats, s_flat = forward_depth(bundle, target)
    poses = [forward_pose(bundle, target, src) for src in sample.sources]
    depths_full = [T.bilinear_resize(d, full_hw) for d in depths]

    if toggles.ti:
        t_feats, t_flat = forward_texture(bundle, target)
        illum = forward_illumination(bundle, s_feats)
        reflect = forward_reflectance(bundle, s_feats, t_feats)
        edge_ref = illum
    else:
        edge_ref = target.image

    photo_terms = []
    edge_terms = []
    mu_fractions = []
    for depth in depths_full:
        synths = [
            synthesize_view(src, depth, pose)
            for src, pose in zip(sample.sources, poses)
        ]
        loss_p, mu = masked_photometric_loss(target, synths, sample.sources, photo_cfg)
        photo_terms.append(loss_p)
        mu_fractions.append(float(mu.mean()))
        edge_terms.append(edge_aware_loss(depth, edge_ref))
    loss_photo = _mean_scalars(photo_terms)
    loss_edge = _mean_scalars(edge_terms)

    term_tensors = {"p": loss_photo, "e": loss_edge}
    if toggles.ti:
        term_tensors["v"] = illumination_loss(target.image, illum, depths_full[0])
        term_tensors["r"] = reflectance_loss(reflect, illum, target.image, photo_cfg)
        term_tensors["o"] = orthogonality_loss(s_flat, t_flat)
    if toggles.sd:
        expert_map = forward_expert(bundle, target)
        expert_nodes = bundle.expert_adapter(expert_map)
        student_nodes = FeatureNodes(s_flat)
        term_tensors["d"] = distillation_loss(
            student_nodes,
            expert_nodes,
            bundle.proj_to_student,
            bundle.proj_to_expert,
            use_gin=toggles.gp,
        )

    lam = weights.as_dict()
    total_tensor = None
    for key, tensor in term_tensors.items():
        weighted = T.mul(tensor, lam[f"lambda_{key}"])
        total_tensor = weighted if total_tensor is None else T.add(total_tensor, weighted)

    values = {k: _term_value(v, k) for k, v in term_tensors.items()}
    return LossBreakdown(
        p=values["p"],
        e=values["e"],
        v=values.get("v"),
        r=values.get("r"),
        o=values.get("o"),
        d=values.get("d"),
        total=float(total_tensor.data),
        weights=weights,
        toggles=toggles,
        mu_fraction=float(np.mean(mu_fractions)),
        total_tensor=total_tensor,
    )


# ---------------------------------------------------------------------------
# optimization

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
ENCODER_GROUPS = ("structure_encoder.", "texture_encoder.")


@dataclass
class OptimizerState:
    lr: float = 1e-4
    lr_encoder: float = 5e-5
    lr_decay: float = 0.9
    epoch: int = 0
    step: int = 0
    skipped: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def effective_lr(self, name: str) -> float:
        base = self.lr_encoder if name.startswith(ENCODER_GROUPS) else self.lr
        return base * self.lr_decay**self.epoch


def adam_step(params: dict, grads: dict, state: OptimizerState) -> None:
    b1, b2 = ADAM_BETAS
    t = state.step + 1
    for name, param in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(param.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        param.data -= (
            state.effective_lr(name) * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        ).astype(param.data.dtype)
    state.step = t


def train_step(
    bundle: ModelBundle,
    sample,
    state: OptimizerState,
    weights: LossWeights | None = None,
    toggles: Toggles | None = None,
    photo_cfg: PhotometricConfig | None = None,
):
    """One forward/backward/update; skips the update on non-finite grads."""
    params = bundle.trainable_parameters()
    with T.Tape() as tape:
        breakdown = total_loss(bundle, sample, weights, toggles, photo_cfg)
        tape.backward(breakdown.total_tensor)
    grads = {}
    finite = True
    for name, param in params.items():
        g = param.grad
        if g is None:
            g = np.zeros_like(param.data)
        if not np.isfinite(g).all():
            finite = False
            break
        grads[name] = g
    if not finite:
        state.skipped += 1
        log.warning("non-finite gradient at step %d (%s); update skipped", state.step, name)
        return breakdown, state
    adam_step(params, grads, state)
    return breakdown, state


def run_training(
    bundle: ModelBundle,
    samples: list,
    epochs: int,
    state: OptimizerState | None = None,
    weights: LossWeights | None = None,
    toggles: Toggles | None = None,
    photo_cfg: PhotometricConfig | None = None,
    seed: int = 42,
    on_record=None,
    on_epoch_end=None,
):
    """Epoch loop with a deterministic per-epoch sample order.

    ``on_record`` receives one dict per step, ``on_epoch_end`` one per
    epoch (after the summary record) for checkpointing.  Resuming from a
    state with ``state.epoch == k`` continues at epoch k and reproduces
    the uninterrupted run exactly.
    """
    state = state or OptimizerState()
    weights = weights or LossWeights()
    toggles = toggles or Toggles()
    while state.epoch < epochs:
        epoch = state.epoch
        order = np.random.default_rng([seed, epoch]).permutation(len(samples))
        totals = []
        for idx in order:
            breakdown, state = train_step(
                bundle, samples[int(idx)], state, weights, toggles, photo_cfg
            )
            totals.append(breakdown.total)
            if on_record is not None:
                on_record(
                    {
                        "step": state.step,
                        "epoch": epoch,
                        "terms": breakdown.terms(),
                        "total": breakdown.total,
                        "lr": state.effective_lr(""),
                    }
                )
        state.epoch = epoch + 1
        if on_record is not None:
            on_record(
                {
                    "event": "epoch_end",
                    "epoch": epoch,
                    "steps": len(totals),
                    "mean_total": float(np.mean(totals)) if totals else 0.0,
                    "skipped": state.skipped,
                }
            )
        if on_epoch_end is not None:
            on_epoch_end(bundle, state)
    return state
