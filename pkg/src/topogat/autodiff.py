"""A small reverse-mode autodiff engine over dense float64 matrices.

Operations are recorded on the active :class:`Tape` (opened with ``with Tape()``)
whenever one of their inputs requires a gradient.  :func:`backward` then walks the
tape in reverse.  Only the op set needed by the graph models is provided.

Example::

    w = Tensor(np.ones((3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = total(matmul(x, w))
    backward(loss, tape)
    w.grad
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("tape", default=None)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 2:
            raise ValueError(f"tensors have rank <= 2, got shape {self.data.shape}")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Op:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    ops: list[_Op] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)

    def __contains__(self, t: Tensor) -> bool:
        return any(op.output is t for op in self.ops)


def _record(out_data: np.ndarray, inputs: tuple[Tensor, ...], grad_fn) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    tape = _active_tape.get()
    if needs and tape is not None:
        tape.ops.append(_Op(inputs, out, grad_fn))
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on ``tape``.

    Leaf gradients accumulate across calls; zero them between steps.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss not in tape:
        raise ValueError("loss was not produced on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for op in reversed(tape.ops):
        g = grads.pop(id(op.output), None)
        if g is None:
            continue
        for t, gi in zip(op.inputs, op.backward(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            grads[key] = grads[key] + gi if key in grads else gi
    # whatever remains belongs to leaves
    leaves = {id(t): t for op in tape.ops for t in op.inputs if t.requires_grad}
    for key, g in grads.items():
        t = leaves.get(key)
        if t is not None:
            t.grad = g if t.grad is None else t.grad + g


# --- elementwise / dense ops -------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _record(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _record(a.data + b.data, (a, b), lambda g: (g, g))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    if x.data.ndim != 2 or b.data.ndim != 1 or b.shape[0] != x.shape[1]:
        raise ValueError(f"add_bias shape mismatch: {x.shape} + {b.shape}")
    return _record(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"concat_cols row mismatch: {a.shape} vs {b.shape}")
    k = a.shape[1]
    return _record(np.hstack([a.data, b.data]), (a, b), lambda g: (g[:, :k], g[:, k:]))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    neg = alpha * np.expm1(np.minimum(x.data, 0.0))
    out = np.where(x.data > 0, x.data, neg)
    return _record(out, (x,), lambda g: (g * np.where(x.data > 0, 1.0, neg + alpha),))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(x.data > 0, 1.0, slope)
    return _record(x.data * factor, (x,), lambda g: (g * factor,))


def total(x: Tensor) -> Tensor:
    """Sum of all entries, as a 0-d tensor."""
    return _record(np.array(x.data.sum()), (x,), lambda g: (np.full_like(x.data, g),))


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index, dtype=np.int64)

    def grad_fn(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return _record(x.data[index], (x,), grad_fn)


def head_dot(h: Tensor, att: Tensor) -> Tensor:
    """Per-head dot products.

    ``h`` is ``N x (K*F)`` laid out head-major, ``att`` is ``K x F``; the result is
    ``N x K`` with entry ``[n, k] = h[n, k*F:(k+1)*F] . att[k]``.
    """
    k, f = att.shape
    if h.data.ndim != 2 or h.shape[1] != k * f:
        raise ValueError(f"head_dot shape mismatch: {h.shape} vs heads {att.shape}")
    h3 = h.data.reshape(-1, k, f)
    out = np.einsum("nkf,kf->nk", h3, att.data)

    def grad_fn(g):
        gh = (g[:, :, None] * att.data[None]).reshape(h.shape)
        ga = np.einsum("nk,nkf->kf", g, h3)
        return gh, ga

    return _record(out, (h, att), grad_fn)


def scale_heads(m: Tensor, alpha: Tensor) -> Tensor:
    """Scale each head block of ``m`` (``E x (K*F)``) by ``alpha`` (``E x K``)."""
    e, k = alpha.shape
    if m.data.ndim != 2 or m.shape[0] != e or m.shape[1] % k:
        raise ValueError(f"scale_heads shape mismatch: {m.shape} vs {alpha.shape}")
    f = m.shape[1] // k
    m3 = m.data.reshape(e, k, f)
    out = (m3 * alpha.data[:, :, None]).reshape(m.shape)

    def grad_fn(g):
        g3 = g.reshape(e, k, f)
        return (g3 * alpha.data[:, :, None]).reshape(m.shape), (g3 * m3).sum(axis=2)

    return _record(out, (m, alpha), grad_fn)


# --- segment ops -------------------------------------------------------------

def _segment_sum_np(values: np.ndarray, segment_of: np.ndarray, num_segments: int) -> np.ndarray:
    out = np.zeros((num_segments,) + values.shape[1:], dtype=np.float64)
    np.add.at(out, segment_of, values)
    return out


def _check_segments(segment_of: np.ndarray, length: int, num_segments: int | None = None) -> np.ndarray:
    segment_of = np.asarray(segment_of, dtype=np.int64)
    if segment_of.shape != (length,):
        raise ValueError(f"segment ids must have length {length}, got {segment_of.shape}")
    if num_segments is not None and length and (segment_of.min() < 0 or segment_of.max() >= num_segments):
        raise ValueError(f"segment ids must lie in [0, {num_segments})")
    return segment_of


def segment_sum(values: Tensor, segment_of: np.ndarray, num_segments: int) -> Tensor:
    segment_of = _check_segments(segment_of, values.shape[0], num_segments)
    out = _segment_sum_np(values.data, segment_of, num_segments)
    return _record(out, (values,), lambda g: (g[segment_of],))


def segment_mean(values: Tensor, segment_of: np.ndarray, num_segments: int) -> Tensor:
    """Per-segment mean; empty segments yield zero rows."""
    segment_of = _check_segments(segment_of, values.shape[0], num_segments)
    counts = np.bincount(segment_of, minlength=num_segments).astype(np.float64)
    inv = 1.0 / np.maximum(counts, 1.0)
    out = _segment_sum_np(values.data, segment_of, num_segments) * inv[:, None]
    return _record(out, (values,), lambda g: (g[segment_of] * inv[segment_of, None],))


def segment_softmax(scores: Tensor, segment_of: np.ndarray, num_segments: int | None = None) -> Tensor:
    """Softmax of ``scores`` (a vector, or one column per head) within each segment."""
    squeeze = scores.data.ndim == 1
    s = scores.data[:, None] if squeeze else scores.data
    if num_segments is None:
        num_segments = int(segment_of.max()) + 1 if len(segment_of) else 0
    segment_of = _check_segments(segment_of, s.shape[0], num_segments)
    if np.any(np.bincount(segment_of, minlength=num_segments) == 0):
        raise ValueError("segment_softmax got an empty segment")

    seg_max = np.full((num_segments, s.shape[1]), -np.inf)
    np.maximum.at(seg_max, segment_of, s)
    ex = np.exp(s - seg_max[segment_of])
    denom = _segment_sum_np(ex, segment_of, num_segments)
    p = ex / denom[segment_of]

    def grad_fn(g):
        g2 = g[:, None] if squeeze else g
        dot = _segment_sum_np(g2 * p, segment_of, num_segments)
        out = p * (g2 - dot[segment_of])
        return (out[:, 0] if squeeze else out,)

    return _record(p[:, 0] if squeeze else p, (scores,), grad_fn)


# --- stochastic / loss ops ---------------------------------------------------

def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)``; identity in eval."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    scale = keep / (1.0 - p)
    return _record(x.data * scale, (x,), lambda g: (g * scale,))


def log_softmax_rows(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    soft = np.exp(out)
    return _record(out, (x,), lambda g: (g - soft * g.sum(axis=1, keepdims=True),))


def nll_loss(logp: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under row log-probabilities."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logp.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got {labels.shape}")
    rows = np.arange(n)

    def grad_fn(g):
        out = np.zeros_like(logp.data)
        out[rows, labels] = -g / n
        return (out,)

    return _record(np.array(-logp.data[rows, labels].mean()), (logp,), grad_fn)


# --- initialisation and optimisation ----------------------------------------

def glorot_init(rows: int, cols: int, rng: np.random.Generator, name: str | None = None) -> Tensor:
    """Glorot-uniform matrix; draws exactly ``rows * cols`` uniforms from ``rng``."""
    if rows <= 0 or cols <= 0:
        raise ValueError("glorot_init needs positive dimensions")
    a = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-a, a, size=(rows, cols)), requires_grad=True, name=name)


@dataclass
class AdamState:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.step,
                         [a.copy() for a in self.m], [a.copy() for a in self.v])


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    A ``None`` gradient is treated as zero.
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ValueError(f"adam shape mismatch for parameter {i}: {g.shape} vs {p.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        p.data = p.data - state.lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)


def rng_streams(seed: int, names: Sequence[str]) -> dict[str, np.random.Generator]:
    """Independent PCG64 generators, one per name, all derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.Generator(np.random.PCG64(c)) for n, c in zip(names, children)}
