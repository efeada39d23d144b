"""Dense float32 tensors and forward/backward math for every layer kind.

All operations are pure functions over immutable inputs.  Dot products are
accumulated in 64-bit floats and the result is cast back to float32, which
keeps outputs stable enough to compare against independent oracles.

Fixed conventions (there is exactly one rule for each, no framework modes):
  * padding is symmetric zero padding,
  * average pooling divides by the full window size, padded zeros included,
  * max pooling treats padding as -inf (padding never wins),
  * dropout is inverted dropout and a no-op outside training,
  * no implicit broadcasting -- every shape mismatch is a hard error.

Single-example operations (``conv2d``, ``dense``, ...) take and return
:class:`Tensor`.  The array-level ``*_fwd``/``*_bwd`` pairs additionally
accept a leading batch axis and return the cache the backward pass needs;
they are what the graph executor and the trainer run on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, DimensionError, StateError

__all__ = [
    "Tensor",
    "ConvParams",
    "DepthwiseParams",
    "BatchNormParams",
    "DenseParams",
    "conv2d",
    "depthwise_conv2d",
    "pointwise_conv2d",
    "batchnorm",
    "pool",
    "dense",
    "softmax_xent",
    "backward",
]


class Tensor:
    """Dense row-major array of 32-bit floats, rank 1 to 4.

    The backing array is read-only; updates create new tensors.  All values
    must be finite.
    """

    __slots__ = ("data",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float32, order="C")
        if arr.ndim < 1 or arr.ndim > 4:
            raise DimensionError(f"tensor rank must be 1..4, got {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains non-finite values")
        arr.flags.writeable = False
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @classmethod
    def zeros(cls, shape: Iterable[int]) -> "Tensor":
        return cls(np.zeros(tuple(shape), dtype=np.float32))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape})"


def _as_f64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _out_f32(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float32)


def _cast_like(a: np.ndarray, ref) -> np.ndarray:
    """float64 in -> float64 out; everything else is cast to float32."""
    dt = np.float64 if np.asarray(ref).dtype == np.float64 else np.float32
    return np.ascontiguousarray(a, dtype=dt)


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvParams:
    """k x k x c_in x c_out kernel plus per-filter bias."""

    kernel: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if len(self.kernel.shape) != 4:
            raise DimensionError(
                f"conv kernel must be rank 4 (k,k,c_in,c_out), got {self.kernel.shape}"
            )
        k0, k1, _, c_out = self.kernel.shape
        if k0 != k1:
            raise DimensionError(f"conv kernel must be square, got {k0}x{k1}")
        if self.bias.shape != (c_out,):
            raise DimensionError(
                f"bias axis: expected ({c_out},) to match kernel c_out, got {self.bias.shape}"
            )
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ConfigError(f"padding must be >= 0, got {self.padding}")


@dataclass(frozen=True)
class DepthwiseParams:
    """One k x k spatial kernel per input channel; no cross-channel mixing."""

    kernel: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if len(self.kernel.shape) != 3:
            raise DimensionError(
                f"depthwise kernel must be rank 3 (k,k,c), got {self.kernel.shape}"
            )
        k0, k1, c = self.kernel.shape
        if k0 != k1:
            raise DimensionError(f"depthwise kernel must be square, got {k0}x{k1}")
        if self.bias.shape != (c,):
            raise DimensionError(
                f"bias axis: expected ({c},) to match kernel channels, got {self.bias.shape}"
            )
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ConfigError(f"padding must be >= 0, got {self.padding}")


@dataclass
class BatchNormParams:
    """Per-channel scale/shift plus running statistics.

    Unlike the other parameter containers this one is mutable: a
    training-mode :func:`batchnorm` call replaces ``running_mean`` and
    ``running_var`` with their exponential-moving-average updates.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    epsilon: float = 1e-5
    momentum: float = 0.99

    def __post_init__(self):
        c = self.gamma.shape
        for name, t in (("beta", self.beta), ("running_mean", self.running_mean),
                        ("running_var", self.running_var)):
            if t.shape != c:
                raise DimensionError(f"{name} shape {t.shape} != gamma shape {c}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not (0.0 < self.momentum < 1.0):
            raise ConfigError(f"momentum must be in (0,1), got {self.momentum}")
        if np.any(self.running_var.data < 0):
            raise ConfigError("running_var must be non-negative")


@dataclass(frozen=True)
class DenseParams:
    weight: Tensor  # (n_in, n_out)
    bias: Tensor    # (n_out,)

    def __post_init__(self):
        if len(self.weight.shape) != 2:
            raise DimensionError(f"dense weight must be rank 2, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[1],):
            raise DimensionError(
                f"bias axis: expected ({self.weight.shape[1]},), got {self.bias.shape}"
            )


# ---------------------------------------------------------------------------
# Array-level forward/backward pairs.  x may carry a leading batch axis; the
# single-example public ops below add/strip it.
# ---------------------------------------------------------------------------


def _pad_spatial(x: np.ndarray, pad: int, value: float = 0.0) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)),
                  constant_values=value)


def _conv_out_dim(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d_fwd(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
               stride: int, pad: int):
    """x: (n,h,w,c_in) -> y: (n,h',w',c_out) with float64 accumulation."""
    n, h, w, c_in = x.shape
    k = kernel.shape[0]
    if kernel.shape[2] != c_in:
        raise DimensionError(
            f"channel axis: input has {c_in} channels, kernel expects {kernel.shape[2]}"
        )
    if h + 2 * pad < k or w + 2 * pad < k:
        raise DimensionError(
            f"spatial axes: padded input {h + 2 * pad}x{w + 2 * pad} smaller than kernel {k}x{k}"
        )
    ho = _conv_out_dim(h, k, stride, pad)
    wo = _conv_out_dim(w, k, stride, pad)
    xp = _pad_spatial(_as_f64(x), pad)
    kern = _as_f64(kernel)
    acc = np.zeros((n, ho, wo, kernel.shape[3]), dtype=np.float64)
    for ki in range(k):
        for kj in range(k):
            patch = xp[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride, :]
            acc += patch @ kern[ki, kj]
    acc += _as_f64(bias)
    cache = {"kind": "conv", "x": x, "kernel": kernel, "stride": stride, "pad": pad}
    return _cast_like(acc, x), cache


def conv2d_bwd(cache: Mapping, dy: np.ndarray):
    x, kernel = cache["x"], cache["kernel"]
    stride, pad = cache["stride"], cache["pad"]
    n, h, w, _ = x.shape
    k = kernel.shape[0]
    ho, wo = dy.shape[1], dy.shape[2]
    xp = _pad_spatial(_as_f64(x), pad)
    kern = _as_f64(kernel)
    dyf = _as_f64(dy)
    dxp = np.zeros_like(xp)
    dk = np.zeros_like(kern)
    for ki in range(k):
        for kj in range(k):
            sl_h = slice(ki, ki + stride * ho, stride)
            sl_w = slice(kj, kj + stride * wo, stride)
            patch = xp[:, sl_h, sl_w, :]
            dk[ki, kj] = np.einsum("nhwc,nhwo->co", patch, dyf)
            dxp[:, sl_h, sl_w, :] += dyf @ kern[ki, kj].T
    db = dyf.sum(axis=(0, 1, 2))
    dx = dxp[:, pad:pad + h, pad:pad + w, :]
    return _cast_like(dx, dy), {"kernel": _cast_like(dk, dy), "bias": _cast_like(db, dy)}


def depthwise_fwd(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                  stride: int, pad: int):
    """Per-channel spatial convolution; channel i of y depends only on channel i of x."""
    n, h, w, c = x.shape
    k = kernel.shape[0]
    if kernel.shape[2] != c:
        raise DimensionError(
            f"channel axis: input has {c} channels, depthwise kernel expects {kernel.shape[2]}"
        )
    if h + 2 * pad < k or w + 2 * pad < k:
        raise DimensionError(
            f"spatial axes: padded input {h + 2 * pad}x{w + 2 * pad} smaller than kernel {k}x{k}"
        )
    ho = _conv_out_dim(h, k, stride, pad)
    wo = _conv_out_dim(w, k, stride, pad)
    xp = _pad_spatial(_as_f64(x), pad)
    kern = _as_f64(kernel)
    acc = np.zeros((n, ho, wo, c), dtype=np.float64)
    for ki in range(k):
        for kj in range(k):
            patch = xp[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride, :]
            acc += patch * kern[ki, kj]
    acc += _as_f64(bias)
    cache = {"kind": "depthwise", "x": x, "kernel": kernel, "stride": stride, "pad": pad}
    return _cast_like(acc, x), cache


def depthwise_bwd(cache: Mapping, dy: np.ndarray):
    x, kernel = cache["x"], cache["kernel"]
    stride, pad = cache["stride"], cache["pad"]
    n, h, w, c = x.shape
    k = kernel.shape[0]
    ho, wo = dy.shape[1], dy.shape[2]
    xp = _pad_spatial(_as_f64(x), pad)
    kern = _as_f64(kernel)
    dyf = _as_f64(dy)
    dxp = np.zeros_like(xp)
    dk = np.zeros_like(kern)
    for ki in range(k):
        for kj in range(k):
            sl_h = slice(ki, ki + stride * ho, stride)
            sl_w = slice(kj, kj + stride * wo, stride)
            patch = xp[:, sl_h, sl_w, :]
            dk[ki, kj] = (patch * dyf).sum(axis=(0, 1, 2))
            dxp[:, sl_h, sl_w, :] += dyf * kern[ki, kj]
    db = dyf.sum(axis=(0, 1, 2))
    dx = dxp[:, pad:pad + h, pad:pad + w, :]
    return _cast_like(dx, dy), {"kernel": _cast_like(dk, dy), "bias": _cast_like(db, dy)}


def batchnorm_fwd(x: np.ndarray, gamma, beta, running_mean, running_var,
                  eps: float, momentum: float, mode: str):
    """Normalize over every axis except the trailing channel axis.

    Returns (y, cache, new_running_mean, new_running_var); the running
    statistics are unchanged in ``infer`` mode.
    """
    if mode not in ("train", "infer"):
        raise ConfigError(f"batchnorm mode must be 'train' or 'infer', got {mode!r}")
    if eps <= 0:
        raise ConfigError(f"epsilon must be positive, got {eps}")
    c = x.shape[-1]
    if gamma.shape[0] != c:
        raise DimensionError(
            f"channel axis: input has {c} channels, batchnorm params have {gamma.shape[0]}"
        )
    xf = _as_f64(x)
    g = _as_f64(gamma)
    b = _as_f64(beta)
    axes = tuple(range(xf.ndim - 1))
    if mode == "train":
        mean = xf.mean(axis=axes)
        var = xf.var(axis=axes)  # biased (population) variance
        new_rm = momentum * _as_f64(running_mean) + (1.0 - momentum) * mean
        new_rv = momentum * _as_f64(running_var) + (1.0 - momentum) * var
    else:
        mean = _as_f64(running_mean)
        var = _as_f64(running_var)
        new_rm, new_rv = None, None
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xf - mean) * inv_std
    y = g * xhat + b
    cache = {"kind": "batchnorm", "xhat": xhat, "inv_std": inv_std,
             "gamma": g, "mode": mode,
             "count": int(np.prod([x.shape[a] for a in axes])) if axes else 1}
    rm_out = _cast_like(new_rm, running_mean) if new_rm is not None else np.asarray(running_mean)
    rv_out = _cast_like(new_rv, running_var) if new_rv is not None else np.asarray(running_var)
    return _cast_like(y, x), cache, rm_out, rv_out


def batchnorm_bwd(cache: Mapping, dy: np.ndarray):
    xhat = cache["xhat"]
    inv_std = cache["inv_std"]
    g = cache["gamma"]
    dyf = _as_f64(dy)
    axes = tuple(range(dyf.ndim - 1))
    dgamma = (dyf * xhat).sum(axis=axes)
    dbeta = dyf.sum(axis=axes)
    if cache["mode"] == "infer":
        dx = dyf * g * inv_std
    else:
        m = float(cache["count"])
        dxhat = dyf * g
        dx = (inv_std / m) * (m * dxhat
                              - dxhat.sum(axis=axes)
                              - xhat * (dxhat * xhat).sum(axis=axes))
    return _cast_like(dx, dy), {"gamma": _cast_like(dgamma, dy), "beta": _cast_like(dbeta, dy)}


def pool_fwd(x: np.ndarray, kind: str, k: int, stride: int, pad: int = 0):
    """Per-channel spatial reduction over k x k windows.

    avg divides by the full window (padded zeros included); max pads with
    -inf so padding never wins, ties resolved to the first window offset in
    row-major order.
    """
    if kind not in ("avg", "max"):
        raise ConfigError(f"pool kind must be 'avg' or 'max', got {kind!r}")
    if k < 1 or stride < 1 or pad < 0:
        raise ConfigError(f"bad pool window/stride/pad: k={k} stride={stride} pad={pad}")
    if pad >= k:
        # a window fully inside the padding would reduce over no real input
        raise ConfigError(f"pool padding must be smaller than the window, got pad={pad} k={k}")
    n, h, w, c = x.shape
    if h + 2 * pad < k or w + 2 * pad < k:
        raise DimensionError(
            f"spatial axes: window {k}x{k} larger than padded input {h + 2 * pad}x{w + 2 * pad}"
        )
    ho = _conv_out_dim(h, k, stride, pad)
    wo = _conv_out_dim(w, k, stride, pad)
    fill = 0.0 if kind == "avg" else -np.inf
    xp = _pad_spatial(_as_f64(x), pad, value=fill)
    stack = np.empty((k * k, n, ho, wo, c), dtype=np.float64)
    for ki in range(k):
        for kj in range(k):
            stack[ki * k + kj] = xp[:, ki:ki + stride * ho:stride,
                                    kj:kj + stride * wo:stride, :]
    if kind == "avg":
        y = stack.sum(axis=0) / float(k * k)
        cache = {"kind": "avgpool", "in_shape": x.shape, "k": k,
                 "stride": stride, "pad": pad}
    else:
        idx = stack.argmax(axis=0)
        y = np.take_along_axis(stack, idx[None], axis=0)[0]
        cache = {"kind": "maxpool", "in_shape": x.shape, "k": k,
                 "stride": stride, "pad": pad, "argmax": idx}
    return _cast_like(y, x), cache


def pool_bwd(cache: Mapping, dy: np.ndarray):
    n, h, w, c = cache["in_shape"]
    k, stride, pad = cache["k"], cache["stride"], cache["pad"]
    ho, wo = dy.shape[1], dy.shape[2]
    dyf = _as_f64(dy)
    dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=np.float64)
    for ki in range(k):
        for kj in range(k):
            sl_h = slice(ki, ki + stride * ho, stride)
            sl_w = slice(kj, kj + stride * wo, stride)
            if cache["kind"] == "avgpool":
                dxp[:, sl_h, sl_w, :] += dyf / float(k * k)
            else:
                mask = cache["argmax"] == (ki * k + kj)
                dxp[:, sl_h, sl_w, :] += dyf * mask
    dx = dxp[:, pad:pad + h, pad:pad + w, :]
    return _cast_like(dx, dy), {}


def dense_fwd(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
              activation: str = "none"):
    """y = x @ W + b with optional ReLU; x is (n_in,) or (n, n_in)."""
    if activation not in ("relu", "none"):
        raise ConfigError(f"activation must be 'relu' or 'none', got {activation!r}")
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"feature axis: input has {x.shape[-1]} features, weight expects {weight.shape[0]}"
        )
    pre = _as_f64(x) @ _as_f64(weight) + _as_f64(bias)
    y = np.maximum(pre, 0.0) if activation == "relu" else pre
    cache = {"kind": "dense", "x": x, "weight": weight,
             "activation": activation, "pre": pre}
    return _cast_like(y, x), cache


def dense_bwd(cache: Mapping, dy: np.ndarray):
    x, weight = cache["x"], cache["weight"]
    dyf = _as_f64(dy)
    if cache["activation"] == "relu":
        dyf = dyf * (cache["pre"] > 0.0)
    xf = _as_f64(x)
    if xf.ndim == 1:
        dw = np.outer(xf, dyf)
        db = dyf
        dx = _as_f64(weight) @ dyf
    else:
        dw = xf.T @ dyf
        db = dyf.sum(axis=0)
        dx = dyf @ _as_f64(weight).T
    return _cast_like(dx, dy), {"weight": _cast_like(dw, dy), "bias": _cast_like(db, dy)}


def relu_fwd(x: np.ndarray):
    y = np.maximum(x, 0)
    return _cast_like(y, x), {"kind": "relu", "x": x}


def relu_bwd(cache: Mapping, dy: np.ndarray):
    dx = _as_f64(dy) * (cache["x"] > 0)
    return _cast_like(dx, dy), {}


def dropout_fwd(x: np.ndarray, rate: float, rng: np.random.Generator | None,
                training: bool):
    """Inverted dropout: scale kept units by 1/(1-rate) so inference is a no-op."""
    if not (0.0 <= rate < 1.0):
        raise ConfigError(f"dropout rate must be in [0,1), got {rate}")
    if not training or rate == 0.0:
        return _cast_like(x, x), {"kind": "dropout", "mask": None, "rate": rate}
    if rng is None:
        raise StateError("training-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= rate)
    y = _as_f64(x) * mask / (1.0 - rate)
    return _cast_like(y, x), {"kind": "dropout", "mask": mask, "rate": rate}


def dropout_bwd(cache: Mapping, dy: np.ndarray):
    if cache["mask"] is None:
        return _cast_like(dy, dy), {}
    dx = _as_f64(dy) * cache["mask"] / (1.0 - cache["rate"])
    return _cast_like(dx, dy), {}


def add_fwd(xs: list[np.ndarray]):
    if len(xs) < 2:
        raise DimensionError(f"add needs at least 2 inputs, got {len(xs)}")
    shape = xs[0].shape
    for i, x in enumerate(xs[1:], start=1):
        if x.shape != shape:
            raise DimensionError(f"add input {i} shape {x.shape} != input 0 shape {shape}")
    acc = _as_f64(xs[0]).copy()
    for x in xs[1:]:
        acc += _as_f64(x)
    return _cast_like(acc, xs[0]), {"kind": "add", "n_inputs": len(xs)}


def add_bwd(cache: Mapping, dy: np.ndarray):
    return [_cast_like(dy, dy) for _ in range(cache["n_inputs"])], {}


def concat_fwd(xs: list[np.ndarray]):
    """Concatenate along the trailing channel axis; spatial dims must agree."""
    if len(xs) < 2:
        raise DimensionError(f"concat needs at least 2 inputs, got {len(xs)}")
    lead = xs[0].shape[:-1]
    for i, x in enumerate(xs[1:], start=1):
        if x.shape[:-1] != lead:
            raise DimensionError(
                f"concat input {i} leading dims {x.shape[:-1]} != input 0 dims {lead}"
            )
    y = np.concatenate([_as_f64(x) for x in xs], axis=-1)
    return _cast_like(y, xs[0]), {"kind": "concat", "widths": [x.shape[-1] for x in xs]}


def concat_bwd(cache: Mapping, dy: np.ndarray):
    splits = np.cumsum(cache["widths"])[:-1]
    parts = np.split(dy, splits, axis=-1)
    return [_cast_like(p, dy) for p in parts], {}


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the trailing axis, float64 inside."""
    z = _as_f64(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return _cast_like(e / e.sum(axis=-1, keepdims=True), logits)


# ---------------------------------------------------------------------------
# Public single-example operations
# ---------------------------------------------------------------------------


def _require_rank(t: Tensor, rank: int, what: str) -> None:
    if len(t.shape) != rank:
        raise DimensionError(f"{what} must be rank {rank}, got shape {t.shape}")


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """2-D convolution of an HxWxC_in tensor with a filter bank."""
    _require_rank(x, 3, "conv input")
    y, _ = conv2d_fwd(x.data[None], p.kernel.data, p.bias.data, p.stride, p.padding)
    return Tensor(y[0])


def depthwise_conv2d(x: Tensor, p: DepthwiseParams) -> Tensor:
    """Depthwise 2-D convolution: one spatial kernel per input channel."""
    _require_rank(x, 3, "depthwise input")
    y, _ = depthwise_fwd(x.data[None], p.kernel.data, p.bias.data, p.stride, p.padding)
    return Tensor(y[0])


def pointwise_conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """1x1 convolution (pure cross-channel mixing)."""
    if p.kernel.shape[0] != 1:
        raise DimensionError(
            f"kernel axis: pointwise convolution requires k=1, got k={p.kernel.shape[0]}"
        )
    return conv2d(x, p)


def batchnorm(x: Tensor, p: BatchNormParams, mode: str = "infer") -> Tensor:
    """Per-channel normalization.

    ``infer`` uses the stored running statistics; ``train`` normalizes with
    the statistics of ``x`` itself and updates ``p``'s running stats in
    place by exponential moving average with ``p.momentum``.
    """
    y, _, rm, rv = batchnorm_fwd(x.data, p.gamma.data, p.beta.data,
                                 p.running_mean.data, p.running_var.data,
                                 p.epsilon, p.momentum, mode)
    if mode == "train":
        p.running_mean = Tensor(rm)
        p.running_var = Tensor(rv)
    return Tensor(y)


def pool(x: Tensor, kind: str, window: int, stride: int, padding: int = 0) -> Tensor:
    """avg or max pooling with a k x k window."""
    _require_rank(x, 3, "pool input")
    y, _ = pool_fwd(x.data[None], kind, window, stride, padding)
    return Tensor(y[0])


def dense(x: Tensor, p: DenseParams, activation: str = "none") -> Tensor:
    """Fully connected layer y = W^T x + b with optional ReLU."""
    _require_rank(x, 1, "dense input")
    y, _ = dense_fwd(x.data, p.weight.data, p.bias.data, activation)
    return Tensor(y)


def softmax_xent(logits: Tensor, label: int) -> tuple[Tensor, float]:
    """Softmax probabilities and the cross-entropy loss against ``label``."""
    _require_rank(logits, 1, "logits")
    n = logits.shape[0]
    if not (0 <= label < n):
        raise IndexError(f"label {label} out of range for {n} classes")
    z = _as_f64(logits.data)
    z = z - z.max()
    e = np.exp(z)
    p = e / e.sum()
    loss = float(-np.log(p[label]))
    return Tensor(p), loss


_BACKWARD = {
    "conv": conv2d_bwd,
    "depthwise": depthwise_bwd,
    "batchnorm": batchnorm_bwd,
    "avgpool": pool_bwd,
    "maxpool": pool_bwd,
    "dense": dense_bwd,
    "relu": relu_bwd,
    "dropout": dropout_bwd,
    "add": add_bwd,
    "concat": concat_bwd,
}


def backward(kind: str, cache: Mapping | None, upstream: np.ndarray):
    """Gradients of the loss w.r.t. a layer's inputs and parameters.

    ``cache`` is the mapping returned by the layer's forward pass; passing
    None (or a cache from a different kind) raises StateError.
    """
    if kind not in _BACKWARD:
        raise ConfigError(f"no backward rule for layer kind {kind!r}")
    if cache is None:
        raise StateError(f"backward({kind!r}) called without a forward cache")
    expect = {"avgpool": "avgpool", "maxpool": "maxpool"}.get(kind, kind)
    if cache.get("kind") != expect:
        raise StateError(
            f"cache kind {cache.get('kind')!r} does not match layer kind {kind!r}"
        )
    return _BACKWARD[kind](cache, np.asarray(upstream))
