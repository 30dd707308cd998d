"""Cross-model feature distillation over a learnable isomorphic graph.

Feature channels act as graph nodes.  An adapter reshapes frozen expert
features onto the student grid; cosine similarities between channel
embeddings form the adjacency; a one-layer GIN-style projector turns
row-normalized aggregated messages into virtual nodes, which are pulled
toward the counterpart model's feature nodes by cosine distance.

Node embeddings are unit-normalized (with an epsilon floor that bumps
exactly-zero channels) when a :class:`FeatureNodes` is built.  All the
downstream consumers are cosines, so this changes no loss value while
making the whole distillation graph invariant to positive per-channel
rescaling of its inputs.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .retinex import _row_cosines

_EPS_NORM = 1e-8


class FeatureNodes:
    """C channel-nodes with unit-norm M-dimensional embeddings."""

    def __init__(self, values: T.Tensor):
        values = T.as_tensor(values)
        if len(values.shape) != 2 or values.shape[0] < 1:
            raise ShapeError(f"FeatureNodes expects [C,M], got {list(values.shape)}")
        self.values = _unit_rows(_zero_row_floor(values))

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _zero_row_floor(values: T.Tensor) -> T.Tensor:
    # bump exactly-zero channels so every node norm clears the floor
    norms = np.sqrt((values.data.astype(np.float64) ** 2).sum(axis=1))
    dead = norms < _EPS_NORM
    if not dead.any():
        return values
    bump = np.zeros_like(values.data)
    bump[dead, 0] = _EPS_NORM
    return T.add(values, T.Tensor(bump))


def _unit_rows(values: T.Tensor) -> T.Tensor:
    norms = T.maximum_scalar(
        T.sqrt(T.tsum(T.mul(values, values), axis=1, keepdims=True)), _EPS_NORM
    )
    return T.div(values, norms)


class ExpertAdapter:
    """Bilinear resize + learnable 1x1 convolution + vectorization."""

    def __init__(self, in_channels, out_channels, grid_hw, rng=None, identity=False):
        self.grid_hw = tuple(grid_hw)
        if identity:
            if in_channels != out_channels:
                raise ShapeError("identity adapter needs matching channel counts")
            w = np.eye(out_channels, dtype=np.float32).reshape(
                out_channels, in_channels, 1, 1
            )
        else:
            w = (
                rng.standard_normal((out_channels, in_channels, 1, 1))
                * np.sqrt(2.0 / in_channels)
            ).astype(np.float32)
        self.weight = T.Tensor(w, requires_grad=True)

    def __call__(self, expert_map) -> FeatureNodes:
        expert_map = T.as_tensor(expert_map)
        resized = T.bilinear_resize(expert_map, self.grid_hw)
        mixed = T.conv2d(resized, self.weight)
        c = mixed.shape[1]
        flat = T.reshape(mixed, (c, self.grid_hw[0] * self.grid_hw[1]))
        return FeatureNodes(flat)

    def parameters(self):
        return {"weight": self.weight}


def adapt_expert(expert_map, adapter: ExpertAdapter) -> FeatureNodes:
    return adapter(expert_map)


def correlation_adjacency(nodes_from: FeatureNodes, nodes_to: FeatureNodes) -> T.Tensor:
    """C x C cosine matrix: entry [i,j] = cos(from_i, to_j)."""
    a, b = nodes_from.values, nodes_to.values
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"embedding widths differ: {a.shape[1]} vs {b.shape[1]}")
    return T.matmul(a, T.transpose2d(b))


class GinProjector:
    """One GIN aggregation step with a two-layer 1x1-conv node map."""

    def __init__(self, channels, rng=None, epsilon: float = 0.0, identity=False):
        self.epsilon = float(epsilon)
        self.channels = channels
        if identity:
            w = np.eye(channels, dtype=np.float32).reshape(channels, channels, 1, 1)
            self.w1 = T.Tensor(w.copy(), requires_grad=True)
            self.w2 = T.Tensor(w.copy(), requires_grad=True)
        else:
            scale = np.sqrt(2.0 / channels)
            init = lambda: (
                rng.standard_normal((channels, channels, 1, 1)) * scale
            ).astype(np.float32)
            self.w1 = T.Tensor(init(), requires_grad=True)
            self.w2 = T.Tensor(init(), requires_grad=True)

    def transform(self, nodes: T.Tensor) -> T.Tensor:
        c, m = nodes.shape
        img = T.reshape(nodes, (1, c, m, 1))
        hidden = T.elu(T.conv2d(img, self.w1))
        out = T.conv2d(hidden, self.w2)
        return T.reshape(out, (c, m))

    def parameters(self):
        return {"w1": self.w1, "w2": self.w2}


def _aggregate_messages(adjacency: T.Tensor, source: FeatureNodes) -> T.Tensor:
    row_norm = T.add(
        T.tsum(T.absolute(adjacency), axis=1, keepdims=True), _EPS_NORM
    )
    return T.matmul(T.div(adjacency, row_norm), source.values)


def gin_aggregate(
    projector: GinProjector, source: FeatureNodes, adjacency: T.Tensor
) -> FeatureNodes:
    """Virtual nodes from row-normalized message aggregation.

    Virtual nodes own no prior embedding, so the GIN self-term scales the
    aggregated message itself: transform((1 + eps) * messages).
    """
    messages = _aggregate_messages(adjacency, source)
    if projector.epsilon:
        messages = T.mul(messages, 1.0 + projector.epsilon)
    return FeatureNodes(projector.transform(messages))


def distillation_loss(
    student: FeatureNodes,
    expert: FeatureNodes,
    proj_to_student: GinProjector,
    proj_to_expert: GinProjector,
    use_gin: bool = True,
):
    """Cosine convergence of virtual nodes to feature nodes, in [0,4].

    Expert nodes are a frozen teacher: they enter only through
    stop-gradient.  With ``use_gin`` off (projector ablation) the virtual
    nodes are the raw aggregation products with no learnable transform.
    """
    expert_sg = FeatureNodes(T.stop_gradient(expert.values))
    adj_es = correlation_adjacency(expert_sg, student)
    adj_se = correlation_adjacency(student, expert_sg)
    if use_gin:
        virtual_student = gin_aggregate(proj_to_student, expert_sg, adj_es)
        virtual_expert = gin_aggregate(proj_to_expert, student, adj_se)
    else:
        virtual_student = FeatureNodes(_aggregate_messages(adj_es, expert_sg))
        virtual_expert = FeatureNodes(_aggregate_messages(adj_se, student))
    cos_student = T.tmean(_row_cosines(virtual_student.values, student.values))
    cos_expert = T.tmean(_row_cosines(virtual_expert.values, expert_sg.values))
    return T.sub(2.0, T.add(cos_student, cos_expert))
