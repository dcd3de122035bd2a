"""Training protocol, metrics and multi-seed benchmarking."""

from __future__ import annotations

import concurrent.futures as cf
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .graph import augment_features
from .models import ModelParams, ModelSpec, build_model, count_parameters, graph_embeddings, model_forward
from .tudataset import Dataset, batch_graphs

log = logging.getLogger(__name__)

STREAMS = ("split", "init", "shuffle", "dropout")


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.005
    epochs: int = 50
    batch_size: int = 32
    train_fraction: float = 0.8
    seeds: tuple[int, ...] = (100, 101, 102, 103, 104)
    dropout: float = 0.5
    sample_std: bool = False
    normalize_topo: bool = False

    def __post_init__(self):
        if self.lr <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("lr, epochs and batch_size must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not self.seeds:
            raise ValueError("at least one seed is required")


@dataclass
class RunResult:
    dataset: str
    variant: str
    seed: int
    accuracy: float
    weighted_f1: float
    params: int
    final_train_loss: float
    seconds: float = field(default=0.0, compare=False)

    def record(self, timing: bool = False) -> dict:
        """Key-value record; wall-clock time only when ``timing`` is set."""
        out = asdict(self)
        if not timing:
            out.pop("seconds")
        return out


@dataclass
class Aggregate:
    dataset: str
    variant: str
    runs: int
    acc_mean: float
    acc_std: float
    f1_mean: float
    f1_std: float
    params: int


def split_dataset(n: int | Dataset, train_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Unstratified random split; the train part holds ``floor(fraction * n)`` items."""
    if isinstance(n, Dataset):
        n = len(n)
    if n < 2:
        raise ValueError("need at least two graphs to split")
    perm = rng.permutation(n)
    k = min(max(int(math.floor(train_fraction * n)), 1), n - 1)
    return perm[:k], perm[k:]


def prepare_dataset(dataset: Dataset, spec: ModelSpec) -> Dataset:
    """Apply topological augmentation when the model variant calls for it."""
    if not spec.augment_topo:
        return dataset
    return dataset.with_graphs([augment_features(g, normalize=spec.normalize_topo) for g in dataset.graphs])


def train_model(spec: ModelSpec, dataset: Dataset, train_idx: Sequence[int], config: TrainConfig,
                seed: int) -> tuple[ModelParams, list[float]]:
    """Adam on mean NLL for ``config.epochs`` epochs; returns final params and per-step losses.

    ``dataset`` must already carry the features ``spec`` expects.
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if not len(train_idx):
        raise ValueError("empty training set")
    rngs = ad.rng_streams(seed, STREAMS)
    params = build_model(spec, rngs["init"])
    tensors = params.parameters()
    state = ad.AdamState(lr=config.lr)
    history: list[float] = []

    for epoch in range(config.epochs):
        order = train_idx[rngs["shuffle"].permutation(len(train_idx))]
        for start in range(0, len(order), config.batch_size):
            batch = batch_graphs(dataset.graphs, order[start:start + config.batch_size])
            params.zero_grad()
            with ad.Tape() as tape:
                logp = model_forward(params, batch, train=True, rng=rngs["dropout"])
                loss = ad.nll_loss(logp, batch.labels)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericalError(f"non-finite loss {value} at epoch {epoch + 1} ({spec.variant}, seed {seed})")
            ad.backward(loss, tape)
            ad.adam_step(tensors, [t.grad for t in tensors], state)
            history.append(value)
        log.debug("%s seed %d epoch %d loss %.4f", spec.variant, seed, epoch + 1, history[-1])
    return params, history


def predict(params: ModelParams, dataset: Dataset, indices: Sequence[int], batch_size: int | None = None) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    step = batch_size or max(len(indices), 1)
    preds = [
        model_forward(params, batch_graphs(dataset.graphs, indices[i:i + step])).data.argmax(axis=1)
        for i in range(0, len(indices), step)
    ]
    return np.concatenate(preds)


def accuracy_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


def weighted_f1_score(y_true: Iterable[int], y_pred: Iterable[int]) -> float:
    """Support-weighted mean of per-class F1 (F1 is 0 where precision + recall is 0)."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    n = len(y_true)
    score = 0.0
    for c in np.unique(y_true):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if tp else 0.0
        score += np.sum(y_true == c) / n * f1
    return float(score)


def evaluate(params: ModelParams, dataset: Dataset, test_idx: Sequence[int],
             batch_size: int | None = None) -> tuple[float, float]:
    """``(accuracy, weighted F1)`` on ``dataset.graphs[test_idx]`` in eval mode."""
    if not len(test_idx):
        raise ValueError("empty test set")
    y_true = dataset.labels()[np.asarray(test_idx)]
    y_pred = predict(params, dataset, test_idx, batch_size)
    return accuracy_score(y_true, y_pred), weighted_f1_score(y_true, y_pred)


def run_single(dataset: Dataset, variant: str, seed: int, config: TrainConfig,
               prepared: Dataset | None = None) -> tuple[RunResult, ModelParams]:
    """Split, build, train and evaluate one (variant, seed)."""
    t0 = time.perf_counter()
    spec = ModelSpec.for_dataset(variant, dataset.feature_dim, dataset.num_classes, config.dropout,
                                 config.normalize_topo)
    data = prepared if prepared is not None else prepare_dataset(dataset, spec)
    train_idx, test_idx = split_dataset(len(dataset), config.train_fraction,
                                        ad.rng_streams(seed, STREAMS)["split"])
    params, history = train_model(spec, data, train_idx, config, seed)
    acc, f1 = evaluate(params, data, test_idx)
    result = RunResult(dataset.name, variant, seed, acc, f1, count_parameters(params),
                       history[-1], time.perf_counter() - t0)
    return result, params


def _job(args) -> RunResult:
    dataset, variant, seed, config = args
    return run_single(dataset, variant, seed, config)[0]


def _std(values: np.ndarray, sample: bool) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1 if sample else 0))


def aggregate(results: Sequence[RunResult], sample_std: bool = False) -> list[Aggregate]:
    """Mean and standard deviation of accuracy / F1 per (dataset, variant)."""
    groups: dict[tuple[str, str], list[RunResult]] = {}
    for r in results:
        groups.setdefault((r.dataset, r.variant), []).append(r)
    out = []
    for (name, variant), rs in groups.items():
        acc = np.array([r.accuracy for r in rs])
        f1 = np.array([r.weighted_f1 for r in rs])
        out.append(Aggregate(name, variant, len(rs), float(acc.mean()), _std(acc, sample_std),
                             float(f1.mean()), _std(f1, sample_std), rs[0].params))
    return out


def run_benchmark(dataset: Dataset, variants: Sequence[str], config: TrainConfig,
                  jobs: int = 1) -> tuple[list[RunResult], list[Aggregate]]:
    """Every variant on every seed; all variants share the split for a given seed.

    Results come back in (variant, seed) order regardless of ``jobs``.
    """
    tasks = [(dataset, v, s, config) for v in variants for s in config.seeds]
    if jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, tasks))
    else:
        results = [_job(t) for t in tasks]
    return results, aggregate(results, config.sample_std)


def export_embeddings(params: ModelParams, dataset: Dataset, batch_size: int = 256) -> list[tuple[int, int, np.ndarray]]:
    """``(graph id, label, pooled embedding)`` for every graph, in dataset order."""
    data = prepare_dataset(dataset, params.spec)
    rows = []
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        emb = graph_embeddings(params, batch_graphs(data.graphs, idx)).data
        rows += [(int(i), int(data.graphs[i].label), emb[j]) for j, i in enumerate(idx)]
    return rows
