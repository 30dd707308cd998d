"""Toy-scale networks wiring the training dataflow.

Structure and texture encoders share an architecture but never share
parameters; depth and illumination decode from structure features only;
the reflectance decoder consumes the elementwise sum of structure and
texture features (which keeps texture detail out of the structure
path); a small pose network regresses axis-angle+translation; a frozen
randomly initialized encoder stands in for the semantic expert.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .distill import ExpertAdapter, GinProjector
from .errors import ContractError, ShapeError
from .geometry import Frame, TensorPose, se3_exp

DEPTH_MIN = 0.1
DEPTH_MAX = 100.0
ILLUM_FLOOR = 1e-3
POSE_SCALE = 0.01


@dataclass
class ToyNetConfig:
    base_channels: int = 16
    encoder_depth: int = 3
    input_hw: tuple = (48, 64)  # (H, W)
    expert_channels: int = 12
    seed: int = 42

    def __post_init__(self):
        self.input_hw = tuple(self.input_hw)
        h, w = self.input_hw
        step = 2**self.encoder_depth
        if h % step or w % step:
            raise ContractError(
                f"input size {w}x{h} must be divisible by 2^{self.encoder_depth}"
            )
        if self.base_channels < 4:
            raise ContractError("base_channels must be at least 4")

    @property
    def feature_channels(self) -> int:
        return self.base_channels * 2 ** (self.encoder_depth - 1)

    @property
    def feature_hw(self) -> tuple:
        step = 2**self.encoder_depth
        return (self.input_hw[0] // step, self.input_hw[1] // step)


class Conv2dLayer:
    def __init__(self, cin, cout, k, rng, stride=1, zero_init=False, frozen=False):
        if zero_init:
            w = np.zeros((cout, cin, k, k), np.float32)
        else:
            w = (
                rng.standard_normal((cout, cin, k, k)) * np.sqrt(2.0 / (cin * k * k))
            ).astype(np.float32)
        trainable = not frozen
        self.weight = T.Tensor(w, requires_grad=trainable)
        self.bias = T.Tensor(np.zeros(cout, np.float32), requires_grad=trainable)
        self.stride = stride
        self.padding = k // 2

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}


def _collect(prefix, layers):
    out = {}
    for name, layer in layers:
        for k, v in layer.parameters().items():
            out[f"{prefix}{name}.{k}"] = v
    return out


class ConvEncoder:
    """Stride-2 conv stages with ELU; feats[i] sits at scale 1/2^(i+1)."""

    def __init__(self, cin, base, depth, rng, frozen=False):
        self.stages = [
            Conv2dLayer(
                cin if i == 0 else base * 2 ** (i - 1),
                base * 2**i,
                3,
                rng,
                stride=2,
                frozen=frozen,
            )
            for i in range(depth)
        ]

    def __call__(self, x):
        feats = []
        for stage in self.stages:
            x = T.elu(stage(x))
            feats.append(x)
        return feats

    def parameters(self):
        return _collect("", [(f"stage{i}", s) for i, s in enumerate(self.stages)])


class PyramidDecoder:
    """Skip-connected decoder with sigmoid heads at requested dyadic scales.

    Scale s means 1/2^s of the input resolution; the decoder ascends from
    the deepest encoder feature (scale = depth) to full resolution,
    merging the matching encoder skip at every level above 0.
    """

    def __init__(self, base, depth, out_channels, head_scales, rng):
        self.depth = depth
        self.head_scales = list(head_scales)
        enc_ch = {s: base * 2 ** (s - 1) for s in range(1, depth + 1)}
        dec_ch = {s: max(base, base * 2 ** (s - 1)) for s in range(0, depth + 1)}
        self.entry = Conv2dLayer(enc_ch[depth], dec_ch[depth], 3, rng)
        self.ups = {}  # scale s: (conv_a: dec[s+1]->dec[s], conv_b: dec[s]+skip->dec[s])
        for s in range(depth - 1, -1, -1):
            conv_a = Conv2dLayer(dec_ch[s + 1], dec_ch[s], 3, rng)
            skip = enc_ch.get(s, 0)
            conv_b = Conv2dLayer(dec_ch[s] + skip, dec_ch[s], 3, rng)
            self.ups[s] = (conv_a, conv_b)
        self.heads = {
            s: Conv2dLayer(dec_ch[s], out_channels, 3, rng) for s in self.head_scales
        }

    def __call__(self, feats):
        maps = {self.depth: T.elu(self.entry(feats[-1]))}
        x = maps[self.depth]
        for s in range(self.depth - 1, -1, -1):
            conv_a, conv_b = self.ups[s]
            x = T.elu(conv_a(x))
            if s >= 1:
                skip = feats[s - 1]
                x = T.bilinear_resize(x, (skip.shape[2], skip.shape[3]))
                x = T.concat([x, skip], axis=1)
            else:
                x = T.bilinear_resize(x, (x.shape[2] * 2, x.shape[3] * 2))
            x = T.elu(conv_b(x))
            maps[s] = x
        return [T.sigmoid(self.heads[s](maps[s])) for s in self.head_scales]

    def parameters(self):
        layers = [("entry", self.entry)]
        for s, (a, b) in self.ups.items():
            layers += [(f"up{s}.a", a), (f"up{s}.b", b)]
        layers += [(f"head{s}", h) for s, h in self.heads.items()]
        return _collect("", layers)


class PoseNet:
    """Regresses a 6-vector (axis-angle, translation) from a frame pair.

    The head is zero-initialized so the initial pose is the identity.
    """

    def __init__(self, base, depth, rng):
        self.encoder = ConvEncoder(6, base, depth, rng)
        self.head = Conv2dLayer(base * 2 ** (depth - 1), 6, 1, rng, zero_init=True)

    def __call__(self, image_a, image_b):
        feats = self.encoder(T.concat([image_a, image_b], axis=1))
        out = self.head(feats[-1])
        pooled = T.tmean(out, axis=(2, 3))  # [1,6]
        return T.mul(T.reshape(pooled, (6,)), POSE_SCALE)

    def parameters(self):
        return {
            **{f"encoder.{k}": v for k, v in self.encoder.parameters().items()},
            **{f"head.{k}": v for k, v in self.head.parameters().items()},
        }


@dataclass
class ModelBundle:
    config: ToyNetConfig
    structure_encoder: ConvEncoder
    texture_encoder: ConvEncoder
    depth_decoder: PyramidDecoder
    illum_decoder: PyramidDecoder
    reflect_decoder: PyramidDecoder
    pose_net: PoseNet
    expert_encoder: ConvEncoder
    expert_adapter: ExpertAdapter
    proj_to_student: GinProjector
    proj_to_expert: GinProjector

    def components(self):
        return {
            "structure_encoder": self.structure_encoder,
            "texture_encoder": self.texture_encoder,
            "depth_decoder": self.depth_decoder,
            "illum_decoder": self.illum_decoder,
            "reflect_decoder": self.reflect_decoder,
            "pose_net": self.pose_net,
            "expert_encoder": self.expert_encoder,
            "expert_adapter": self.expert_adapter,
            "proj_to_student": self.proj_to_student,
            "proj_to_expert": self.proj_to_expert,
        }

    def parameters(self):
        out = {}
        for name, comp in self.components().items():
            for k, v in comp.parameters().items():
                out[f"{name}.{k}"] = v
        return out

    def trainable_parameters(self):
        return {k: v for k, v in self.parameters().items() if v.requires_grad}

    def parameter_count(self) -> int:
        return sum(int(v.size) for v in self.parameters().values())


def build_bundle(config: ToyNetConfig) -> ModelBundle:
    """Construct all networks with deterministic per-component seeding."""
    seeds = np.random.SeedSequence(config.seed).spawn(10)
    rngs = [np.random.default_rng(s) for s in seeds]
    base, depth = config.base_channels, config.encoder_depth
    c_feat = config.feature_channels
    bundle = ModelBundle(
        config=config,
        structure_encoder=ConvEncoder(3, base, depth, rngs[0]),
        texture_encoder=ConvEncoder(3, base, depth, rngs[1]),
        depth_decoder=PyramidDecoder(base, depth, 1, [0, 1, 2, 3], rngs[2]),
        illum_decoder=PyramidDecoder(base, depth, 1, [0], rngs[3]),
        reflect_decoder=PyramidDecoder(base, depth, 3, [0], rngs[4]),
        pose_net=PoseNet(base, depth, rngs[5]),
        expert_encoder=ConvEncoder(
            3, config.expert_channels, depth, rngs[6], frozen=True
        ),
        expert_adapter=ExpertAdapter(
            config.expert_channels * 2 ** (depth - 1),
            c_feat,
            config.feature_hw,
            rngs[7],
        ),
        proj_to_student=GinProjector(c_feat, rngs[8]),
        proj_to_expert=GinProjector(c_feat, rngs[9]),
    )
    return bundle


def _check_frame(config, frame: Frame):
    if (frame.image.shape[2], frame.image.shape[3]) != config.input_hw:
        raise ShapeError(
            f"frame size {frame.image.shape[2:]} does not match config {config.input_hw}"
        )


def disparity_to_depth(disp):
    """Map a sigmoid disparity in [0,1] to depth in [DEPTH_MIN, DEPTH_MAX]."""
    lo, hi = 1.0 / DEPTH_MAX, 1.0 / DEPTH_MIN
    return T.div(1.0, T.add(T.mul(disp, hi - lo), lo))


def forward_depth(bundle: ModelBundle, frame: Frame):
    """Multi-scale depth from the structure encoder.

    Returns (depths, structure_feats, flat_features) where depths[i] is
    the depth map at scale 1/2^i and flat_features is the deepest
    feature map vectorized to [C, H'*W'].
    """
    _check_frame(bundle.config, frame)
    feats = bundle.structure_encoder(frame.image)
    disps = bundle.depth_decoder(feats)
    depths = [disparity_to_depth(d) for d in disps]
    deepest = feats[-1]
    c = deepest.shape[1]
    flat = T.reshape(deepest, (c, deepest.shape[2] * deepest.shape[3]))
    return depths, feats, flat


def forward_texture(bundle: ModelBundle, frame: Frame):
    _check_frame(bundle.config, frame)
    feats = bundle.texture_encoder(frame.image)
    deepest = feats[-1]
    c = deepest.shape[1]
    return feats, T.reshape(deepest, (c, deepest.shape[2] * deepest.shape[3]))


def forward_illumination(bundle: ModelBundle, structure_feats):
    """Illumination map in [ILLUM_FLOOR, 1] from structure features."""
    raw = bundle.illum_decoder(structure_feats)[0]
    return T.add(T.mul(raw, 1.0 - ILLUM_FLOOR), ILLUM_FLOOR)


def forward_reflectance(bundle: ModelBundle, structure_feats, texture_feats):
    summed = [T.add(s, t) for s, t in zip(structure_feats, texture_feats)]
    return bundle.reflect_decoder(summed)[0]


def forward_pose(bundle: ModelBundle, frame_a: Frame, frame_b: Frame) -> TensorPose:
    """Relative pose frame_a -> frame_b as an exponentiated twist."""
    _check_frame(bundle.config, frame_a)
    _check_frame(bundle.config, frame_b)
    vec = bundle.pose_net(frame_a.image, frame_b.image)
    axis_angle = T.getitem(vec, slice(0, 3))
    translation = T.getitem(vec, slice(3, 6))
    return se3_exp(axis_angle, translation)


def forward_expert(bundle: ModelBundle, frame: Frame):
    """Frozen expert feature map; identical output for identical input."""
    _check_frame(bundle.config, frame)
    return bundle.expert_encoder(frame.image)[-1]
