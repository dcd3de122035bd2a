"""GAT / GCN / GraphSAGE layers and the five graph-classification variants.

Every variant has the same skeleton::

    layer1 -> dropout -> layer2 -> mean pool per graph -> linear -> log_softmax

GAT layer 1 has 4 heads of width 8, concatenated (32 wide); GAT layer 2 is one
head of width 64.  GCN and GraphSAGE use 64 hidden units in both layers.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .tudataset import GraphBatch

VARIANTS = ("gcn", "graphsage", "simple_gat", "light_topo_gat", "light_topo_gat_no_topo")

DISPLAY_NAMES = {
    "gcn": "GCN",
    "graphsage": "GraphSAGE",
    "simple_gat": "SimpleGAT",
    "light_topo_gat": "LightTopoGAT",
    "light_topo_gat_no_topo": "LightTopoGAT_NoTopo",
}

GAT_HEADS = 4
GAT_HEAD_DIM = 8
HIDDEN = 64
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of one model.

    ``in_dim`` is the width of the features the model actually sees, so for
    ``light_topo_gat`` it already includes the two topological columns.
    """

    variant: str
    in_dim: int
    num_classes: int
    dropout: float = 0.5
    # min-max scale the appended degree / clustering columns per graph (off: raw values)
    normalize_topo: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown model variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.in_dim <= 0 or self.num_classes <= 0:
            raise ValueError("in_dim and num_classes must be positive")

    @property
    def augment_topo(self) -> bool:
        return self.variant == "light_topo_gat"

    @property
    def family(self) -> str:
        return {"gcn": "gcn", "graphsage": "sage"}.get(self.variant, "gat")

    @classmethod
    def for_dataset(cls, variant: str, feature_dim: int, num_classes: int, dropout: float = 0.5,
                    normalize_topo: bool = False) -> "ModelSpec":
        """Spec for raw dataset features of width ``feature_dim``."""
        extra = 2 if variant == "light_topo_gat" else 0
        return cls(variant, feature_dim + extra, num_classes, dropout, normalize_topo)


@dataclass(frozen=True)
class GatLayerParams:
    lin_weight: Tensor
    att_src: Tensor  # heads x head_dim
    att_dst: Tensor  # heads x head_dim
    bias: Tensor
    heads: int
    concat: bool = True
    leaky_slope: float = LEAKY_SLOPE

    @property
    def head_dim(self) -> int:
        return self.att_src.shape[1]


class ModelParams:
    """Ordered, named learnable tensors for one :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec, tensors: dict[str, Tensor]):
        self.spec = spec
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: Tensor(t.data.copy(), requires_grad=True, name=k)
                                       for k, t in self.tensors.items()})

    def gat_layer(self, prefix: str, heads: int, concat: bool) -> GatLayerParams:
        t = self.tensors
        return GatLayerParams(t[f"{prefix}.lin_weight"], t[f"{prefix}.att_src"],
                              t[f"{prefix}.att_dst"], t[f"{prefix}.bias"], heads, concat)


def _zeros(n: int, name: str) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True, name=name)


def build_model(spec: ModelSpec, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights and zero biases, drawn in a fixed order from ``rng``."""
    t: dict[str, Tensor] = {}

    def glorot(name, rows, cols):
        t[name] = ad.glorot_init(rows, cols, rng, name=name)

    if spec.family == "gat":
        width1 = GAT_HEADS * GAT_HEAD_DIM
        glorot("conv1.lin_weight", spec.in_dim, width1)
        glorot("conv1.att_src", GAT_HEADS, GAT_HEAD_DIM)
        glorot("conv1.att_dst", GAT_HEADS, GAT_HEAD_DIM)
        t["conv1.bias"] = _zeros(width1, "conv1.bias")
        glorot("conv2.lin_weight", width1, HIDDEN)
        glorot("conv2.att_src", 1, HIDDEN)
        glorot("conv2.att_dst", 1, HIDDEN)
        t["conv2.bias"] = _zeros(HIDDEN, "conv2.bias")
    elif spec.family == "gcn":
        glorot("conv1.weight", spec.in_dim, HIDDEN)
        t["conv1.bias"] = _zeros(HIDDEN, "conv1.bias")
        glorot("conv2.weight", HIDDEN, HIDDEN)
        t["conv2.bias"] = _zeros(HIDDEN, "conv2.bias")
    else:
        glorot("conv1.w_root", spec.in_dim, HIDDEN)
        glorot("conv1.w_neigh", spec.in_dim, HIDDEN)
        t["conv1.bias"] = _zeros(HIDDEN, "conv1.bias")
        glorot("conv2.w_root", HIDDEN, HIDDEN)
        glorot("conv2.w_neigh", HIDDEN, HIDDEN)
        t["conv2.bias"] = _zeros(HIDDEN, "conv2.bias")
    glorot("classifier.weight", HIDDEN, spec.num_classes)
    t["classifier.bias"] = _zeros(spec.num_classes, "classifier.bias")
    return ModelParams(spec, t)


def count_parameters(params: ModelParams) -> int:
    return int(sum(t.data.size for t in params.tensors.values()))


# --- layers ------------------------------------------------------------------

def _with_self_loops(batch: GraphBatch) -> tuple[np.ndarray, np.ndarray]:
    loops = np.arange(batch.num_nodes)
    return np.concatenate([batch.edge_src, loops]), np.concatenate([batch.edge_dst, loops])


def gat_attention(batch: GraphBatch, x: Tensor, params: GatLayerParams) -> tuple[Tensor, Tensor, np.ndarray, np.ndarray]:
    """Projected features and per-edge attention ``(Wx, alpha, src, dst)``.

    Edges include one self-loop per node; ``alpha`` is ``E x heads`` and sums to 1
    over the incoming edges of every destination node.
    """
    if x.shape[1] != params.lin_weight.shape[0]:
        raise ValueError(f"GAT layer expects {params.lin_weight.shape[0]} input columns, got {x.shape[1]}")
    src, dst = _with_self_loops(batch)
    h = ad.matmul(x, params.lin_weight)
    score_src = ad.head_dot(h, params.att_src)
    score_dst = ad.head_dot(h, params.att_dst)
    e = ad.leaky_relu(ad.add(ad.gather_rows(score_dst, dst), ad.gather_rows(score_src, src)),
                      params.leaky_slope)
    alpha = ad.segment_softmax(e, dst, batch.num_nodes)
    return h, alpha, src, dst


def gat_layer_forward(batch: GraphBatch, x: Tensor, params: GatLayerParams, activate: bool) -> Tensor:
    """Graph attention layer; ELU on the output when ``activate``."""
    if not params.concat and params.heads > 1:
        raise NotImplementedError("head averaging is not used by any variant")
    h, alpha, src, dst = gat_attention(batch, x, params)
    messages = ad.scale_heads(ad.gather_rows(h, src), alpha)
    out = ad.segment_sum(messages, dst, batch.num_nodes)
    out = ad.add_bias(out, params.bias)
    return ad.elu(out) if activate else out


def gcn_norm(batch: GraphBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edges of A + I with symmetric normalisation weights ``1/sqrt(d_u d_v)``."""
    src, dst = _with_self_loops(batch)
    deg = np.bincount(dst, minlength=batch.num_nodes).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return src, dst, inv_sqrt[src] * inv_sqrt[dst]


def gcn_layer_forward(batch: GraphBatch, x: Tensor, weight: Tensor, bias: Tensor, activate: bool) -> Tensor:
    if x.shape[1] != weight.shape[0]:
        raise ValueError(f"GCN layer expects {weight.shape[0]} input columns, got {x.shape[1]}")
    src, dst, w = gcn_norm(batch)
    h = ad.matmul(x, weight)
    msg = ad.scale_heads(ad.gather_rows(h, src), Tensor(w[:, None]))
    out = ad.add_bias(ad.segment_sum(msg, dst, batch.num_nodes), bias)
    return ad.relu(out) if activate else out


def sage_layer_forward(batch: GraphBatch, x: Tensor, w_root: Tensor, w_neigh: Tensor,
                       bias: Tensor, activate: bool) -> Tensor:
    """Mean-aggregation GraphSAGE; isolated nodes get a zero neighbour term."""
    if x.shape[1] != w_root.shape[0]:
        raise ValueError(f"SAGE layer expects {w_root.shape[0]} input columns, got {x.shape[1]}")
    neigh = ad.segment_mean(ad.gather_rows(x, batch.edge_src), batch.edge_dst, batch.num_nodes)
    out = ad.add(ad.matmul(x, w_root), ad.matmul(neigh, w_neigh))
    out = ad.add_bias(out, bias)
    return ad.relu(out) if activate else out


# --- full model --------------------------------------------------------------

def _layer(params: ModelParams, batch: GraphBatch, x: Tensor, index: int) -> Tensor:
    p, last = f"conv{index}", index == 2
    family = params.spec.family
    if family == "gat":
        heads = 1 if last else GAT_HEADS
        return gat_layer_forward(batch, x, params.gat_layer(p, heads, True), activate=not last)
    if family == "gcn":
        return gcn_layer_forward(batch, x, params[f"{p}.weight"], params[f"{p}.bias"], activate=not last)
    return sage_layer_forward(batch, x, params[f"{p}.w_root"], params[f"{p}.w_neigh"],
                              params[f"{p}.bias"], activate=not last)


def graph_embeddings(params: ModelParams, batch: GraphBatch, train: bool = False,
                     rng: np.random.Generator | None = None) -> Tensor:
    """Mean-pooled final node embeddings, one 64-wide row per graph."""
    if batch.features.shape[1] != params.spec.in_dim:
        raise ValueError(f"model expects {params.spec.in_dim} feature columns, batch has {batch.features.shape[1]}")
    x = Tensor(batch.features)
    h = _layer(params, batch, x, 1)
    h = ad.dropout(h, params.spec.dropout, train, rng)
    h = _layer(params, batch, h, 2)
    return ad.segment_mean(h, batch.graph_id, batch.num_graphs)


def model_forward(params: ModelParams, batch: GraphBatch, train: bool = False,
                  rng: np.random.Generator | None = None) -> Tensor:
    """Per-graph class log-probabilities, ``num_graphs x num_classes``."""
    pooled = graph_embeddings(params, batch, train, rng)
    logits = ad.add_bias(ad.matmul(pooled, params["classifier.weight"]), params["classifier.bias"])
    return ad.log_softmax_rows(logits)


# --- checkpoints -------------------------------------------------------------

def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    """Write an ``.npz`` holding every named tensor plus the spec as JSON."""
    arrays = {name: t.data for name, t in params.tensors.items()}
    arrays["__spec__"] = np.array(json.dumps(asdict(params.spec), sort_keys=True))
    # fixed member timestamps keep reruns byte-identical; np.load reads this layout
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asarray(arr), allow_pickle=False)


def load_checkpoint(path: str | Path) -> ModelParams:
    with np.load(path, allow_pickle=False) as z:
        spec = ModelSpec(**json.loads(str(z["__spec__"])))
        template = build_model(spec, np.random.default_rng(0))
        tensors = {}
        for name, t in template.tensors.items():
            if name not in z.files or z[name].shape != t.shape:
                raise ValueError(f"checkpoint {path} is missing or misshapes {name!r}")
            tensors[name] = Tensor(z[name].copy(), requires_grad=True, name=name)
    return ModelParams(spec, tensors)
