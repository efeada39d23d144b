"""Declarative layer graphs, the ResMoNet builder, and weight serialization.

A graph is an ordered list of named :class:`LayerSpec`s forming a DAG with
exactly one entry layer (empty ``inputs``) fed by the graph input and
exactly one ``softmax`` sink.  Shapes are propagated symbolically at
validation time, so a graph file plus an input shape fully determines every
tensor in the model; channel counts of upstream layers are never repeated
in the file.

Graph file format (UTF-8, ``#`` comments, one layer per line)::

    name kind key=value ... <- input1,input2

Weight file format (binary, little-endian)::

    magic "RMNW", u16 version=1, u32 layer count,
    per layer:  u16 name length, name bytes, u8 tensor count,
    per tensor: u16 param-name length, name bytes, u8 rank,
                u32 dims[rank], float32 raw data
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from . import tensor as T
from .errors import (
    ConfigError,
    GraphError,
    WeightFormatError,
    WeightShapeError,
    WeightTruncationError,
)

LAYER_KINDS = frozenset({
    "conv", "depthwise", "pointwise", "batchnorm", "relu", "avgpool",
    "maxpool", "dense", "dropout", "softmax", "concat", "add",
})

_MAGIC = b"RMNW"
_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    """One node of the graph: a unique name, a kind, kind-specific
    hyperparameters, and the names of its upstream layers."""

    name: str
    kind: str
    hyper: dict = field(default_factory=dict)
    inputs: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise GraphError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "hyper", dict(self.hyper))

    def hp(self, key, default=None):
        return self.hyper.get(key, default)


def _out_spatial(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _propagate(layer: LayerSpec, in_shapes: list[tuple[int, ...]]) -> tuple[int, ...]:
    """Output shape of one layer given its input shapes (no batch axis)."""
    kind = layer.kind
    name = layer.name

    def one_input():
        if len(in_shapes) != 1:
            raise GraphError(f"layer {name!r} ({kind}) takes exactly 1 input, "
                             f"got {len(in_shapes)}")
        return in_shapes[0]

    if kind in ("conv", "pointwise", "depthwise", "avgpool", "maxpool"):
        s = one_input()
        if len(s) != 3:
            raise GraphError(f"layer {name!r} ({kind}) needs an HxWxC input, got {s}")
        h, w, c = s
        if kind == "pointwise":
            k, stride, pad = 1, 1, 0
        else:
            k = int(layer.hp("k"))
            stride = int(layer.hp("stride", 1))
            pad = int(layer.hp("pad", 0))
        if h + 2 * pad < k or w + 2 * pad < k:
            raise GraphError(f"layer {name!r}: window {k} larger than padded "
                             f"input {h + 2 * pad}x{w + 2 * pad}")
        ho = _out_spatial(h, k, stride, pad)
        wo = _out_spatial(w, k, stride, pad)
        if ho < 1 or wo < 1:
            raise GraphError(f"layer {name!r}: non-positive output size {ho}x{wo}")
        if kind in ("conv", "pointwise"):
            return (ho, wo, int(layer.hp("filters")))
        return (ho, wo, c)
    if kind in ("batchnorm", "relu", "dropout"):
        return one_input()
    if kind == "dense":
        s = one_input()
        return (int(layer.hp("units")),)
    if kind == "softmax":
        s = one_input()
        if len(s) != 1:
            raise GraphError(f"layer {name!r}: softmax needs a flat input, got {s}")
        return s
    if kind == "add":
        if len(in_shapes) < 2:
            raise GraphError(f"layer {name!r}: add needs >= 2 inputs")
        for i, s in enumerate(in_shapes[1:], start=1):
            if s != in_shapes[0]:
                raise GraphError(f"layer {name!r}: add input shapes differ: "
                                 f"{in_shapes[0]} vs {s}")
        return in_shapes[0]
    if kind == "concat":
        if len(in_shapes) < 2:
            raise GraphError(f"layer {name!r}: concat needs >= 2 inputs")
        lead = in_shapes[0][:-1]
        for i, s in enumerate(in_shapes[1:], start=1):
            if s[:-1] != lead:
                raise GraphError(f"layer {name!r}: concat spatial dims differ: "
                                 f"{in_shapes[0]} vs {s}")
        return lead + (sum(s[-1] for s in in_shapes),)
    raise GraphError(f"layer {name!r}: unhandled kind {kind!r}")  # pragma: no cover


@dataclass
class ModelGraph:
    """Topologically ordered layers plus the graph-level input/output contract.

    ``m`` and ``r`` (mobile and residual depth) are derived: each mobile
    block contributes exactly one depthwise layer and each residual block
    exactly one add layer, so they are countable from the layer kinds.
    """

    layers: list[LayerSpec]
    input_shape: tuple[int, int, int]
    num_classes: int

    def __post_init__(self):
        self.layers = list(self.layers)
        self.input_shape = tuple(self.input_shape)
        self._shapes = self._validate()

    @property
    def m(self) -> int:
        return sum(1 for l in self.layers if l.kind == "depthwise")

    @property
    def r(self) -> int:
        return sum(1 for l in self.layers if l.kind == "add")

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Layer name -> computed output shape (no batch axis)."""
        return dict(self._shapes)

    def layer(self, name: str) -> LayerSpec:
        for l in self.layers:
            if l.name == name:
                return l
        raise GraphError(f"no layer named {name!r}")

    def _validate(self) -> dict[str, tuple[int, ...]]:
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise GraphError(f"input shape must be (H,W,C) positive, got {self.input_shape}")
        if self.num_classes < 1:
            raise GraphError(f"num_classes must be >= 1, got {self.num_classes}")
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise GraphError(f"duplicate layer names: {dup}")
        entries = [l for l in self.layers if not l.inputs]
        if len(entries) != 1:
            raise GraphError(f"graph must have exactly one entry layer, "
                             f"found {[l.name for l in entries]}")
        softmaxes = [l for l in self.layers if l.kind == "softmax"]
        if len(softmaxes) != 1:
            raise GraphError(f"graph must have exactly one softmax layer, "
                             f"found {[l.name for l in softmaxes]}")
        consumed = {nm for l in self.layers for nm in l.inputs}
        sinks = [l.name for l in self.layers if l.name not in consumed]
        if sinks != [softmaxes[0].name]:
            raise GraphError(f"the softmax layer must be the only sink, sinks: {sinks}")

        shapes: dict[str, tuple[int, ...]] = {}
        seen: set[str] = set()
        for layer in self.layers:
            for nm in layer.inputs:
                if nm not in seen:
                    raise GraphError(f"layer {layer.name!r}: input {nm!r} does not "
                                     f"resolve to an earlier layer")
            in_shapes = ([shapes[nm] for nm in layer.inputs]
                         if layer.inputs else [self.input_shape])
            shapes[layer.name] = _propagate(layer, in_shapes)
            seen.add(layer.name)
        out = shapes[softmaxes[0].name]
        if out != (self.num_classes,):
            raise GraphError(f"softmax width {out} != num_classes "
                             f"({self.num_classes},)")
        return shapes


def param_shapes(layer: LayerSpec, in_shape: tuple[int, ...]) -> dict[str, tuple[int, ...]]:
    """Named parameter tensor shapes a layer requires, given its input shape."""
    kind = layer.kind
    if kind == "conv":
        k = int(layer.hp("k"))
        return {"kernel": (k, k, in_shape[-1], int(layer.hp("filters"))),
                "bias": (int(layer.hp("filters")),)}
    if kind == "pointwise":
        return {"kernel": (1, 1, in_shape[-1], int(layer.hp("filters"))),
                "bias": (int(layer.hp("filters")),)}
    if kind == "depthwise":
        k = int(layer.hp("k"))
        return {"kernel": (k, k, in_shape[-1]), "bias": (in_shape[-1],)}
    if kind == "batchnorm":
        c = in_shape[-1]
        return {"gamma": (c,), "beta": (c,), "running_mean": (c,), "running_var": (c,)}
    if kind == "dense":
        n_in = 1
        for d in in_shape:
            n_in *= d
        return {"weight": (n_in, int(layer.hp("units"))),
                "bias": (int(layer.hp("units")),)}
    return {}


class WeightStore:
    """Map layer name -> named parameter tensors."""

    def __init__(self, tensors: Mapping[str, Mapping[str, T.Tensor]] | None = None):
        self._tensors: dict[str, dict[str, T.Tensor]] = {}
        if tensors:
            for layer, params in tensors.items():
                self._tensors[layer] = dict(params)

    def set(self, layer: str, params: Mapping[str, T.Tensor]) -> None:
        self._tensors[layer] = dict(params)

    def get(self, layer: str) -> dict[str, T.Tensor]:
        return self._tensors[layer]

    def __contains__(self, layer: str) -> bool:
        return layer in self._tensors

    def layers(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def arrays(self) -> dict[str, dict[str, np.ndarray]]:
        """Plain float32 array view (copies) for the executor/trainer."""
        return {layer: {k: np.array(t.data) for k, t in params.items()}
                for layer, params in self._tensors.items()}

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, Mapping[str, np.ndarray]]) -> "WeightStore":
        return cls({layer: {k: T.Tensor(a) for k, a in params.items()}
                    for layer, params in arrays.items()})


def validate_weights(graph: ModelGraph, store: WeightStore) -> None:
    """Check that the store carries exactly the tensors the graph needs."""
    shapes = graph.shapes
    for layer in graph.layers:
        in_shape = shapes[layer.inputs[0]] if layer.inputs else graph.input_shape
        need = param_shapes(layer, in_shape)
        if not need:
            continue
        if layer.name not in store:
            raise WeightShapeError(f"layer {layer.name!r}: no weights in store")
        have = store.get(layer.name)
        for pname, pshape in need.items():
            if pname not in have:
                raise WeightShapeError(
                    f"layer {layer.name!r}: missing parameter {pname!r}")
            if have[pname].shape != pshape:
                raise WeightShapeError(
                    f"layer {layer.name!r}: parameter {pname!r} has shape "
                    f"{have[pname].shape}, graph expects {pshape}")
        extra = set(have) - set(need)
        if extra:
            raise WeightShapeError(
                f"layer {layer.name!r}: unexpected parameters {sorted(extra)}")


# ---------------------------------------------------------------------------
# Block builders and the ResMoNet assembler
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StemConfig:
    initial_filters: int = 32
    branch_mid: int = 16
    branch_out: int = 32
    out_filters: int = 32


@dataclass(frozen=True)
class MobileConfig:
    filters: int = 64
    k: int = 3
    pool: int = 2


@dataclass(frozen=True)
class ResidualConfig:
    channels: int = 64
    k: int = 3


@dataclass(frozen=True)
class TransitionConfig:
    filters: int = 32
    k: int = 3
    pool: int = 2


@dataclass(frozen=True)
class DenseHeadConfig:
    hidden: int = 256
    dropout_rate: float = 0.5
    classes: int = 7


def _bn_relu(prefix: str, upstream: str) -> list[LayerSpec]:
    return [
        LayerSpec(f"{prefix}_bn", "batchnorm", {}, (upstream,)),
        LayerSpec(f"{prefix}_relu", "relu", {}, (f"{prefix}_bn",)),
    ]


def build_block(kind: str, entry: str | None, cfg, prefix: str | None = None) -> list[LayerSpec]:
    """Layer sequence for one named block, wired onto ``entry``.

    ``entry`` is the name of the upstream layer (None only for the stem,
    which then becomes the graph entry).  The caller appends the returned
    specs to its graph; shape consistency is checked by graph validation.
    """
    p = prefix or kind
    ein = (entry,) if entry is not None else ()
    if kind == "stem":
        layers = [LayerSpec(f"{p}_conv1", "conv",
                            {"k": 3, "stride": 2, "pad": 1,
                             "filters": cfg.initial_filters}, ein)]
        layers += _bn_relu(f"{p}_conv1", f"{p}_conv1")
        trunk = f"{p}_conv1_relu"
        layers.append(LayerSpec(f"{p}_b1", "pointwise",
                                {"filters": cfg.branch_mid}, (trunk,)))
        layers += _bn_relu(f"{p}_b1", f"{p}_b1")
        layers.append(LayerSpec(f"{p}_b2", "conv",
                                {"k": 3, "stride": 2, "pad": 1,
                                 "filters": cfg.branch_out}, (f"{p}_b1_relu",)))
        layers += _bn_relu(f"{p}_b2", f"{p}_b2")
        layers.append(LayerSpec(f"{p}_pool", "maxpool",
                                {"k": 2, "stride": 2}, (trunk,)))
        layers.append(LayerSpec(f"{p}_concat", "concat", {},
                                (f"{p}_b2_relu", f"{p}_pool")))
        layers.append(LayerSpec(f"{p}_out", "pointwise",
                                {"filters": cfg.out_filters}, (f"{p}_concat",)))
        layers += _bn_relu(f"{p}_out", f"{p}_out")
        return layers
    if entry is None:
        raise GraphError(f"block kind {kind!r} needs an entry layer")
    if kind == "mobile":
        layers = [LayerSpec(f"{p}_dw", "depthwise",
                            {"k": cfg.k, "stride": 1, "pad": cfg.k // 2}, ein)]
        layers += _bn_relu(f"{p}_dw", f"{p}_dw")
        layers.append(LayerSpec(f"{p}_pw", "pointwise",
                                {"filters": cfg.filters}, (f"{p}_dw_relu",)))
        layers += _bn_relu(f"{p}_pw", f"{p}_pw")
        layers.append(LayerSpec(f"{p}_pool", "avgpool",
                                {"k": cfg.pool, "stride": cfg.pool},
                                (f"{p}_pw_relu",)))
        return layers
    if kind == "residual":
        pad = cfg.k // 2
        layers = [LayerSpec(f"{p}_conv1", "conv",
                            {"k": cfg.k, "stride": 1, "pad": pad,
                             "filters": cfg.channels}, ein)]
        layers += _bn_relu(f"{p}_conv1", f"{p}_conv1")
        layers.append(LayerSpec(f"{p}_conv2", "conv",
                                {"k": cfg.k, "stride": 1, "pad": pad,
                                 "filters": cfg.channels}, (f"{p}_conv1_relu",)))
        layers.append(LayerSpec(f"{p}_conv2_bn", "batchnorm", {}, (f"{p}_conv2",)))
        layers.append(LayerSpec(f"{p}_add", "add", {}, (f"{p}_conv2_bn", entry)))
        layers.append(LayerSpec(f"{p}_relu", "relu", {}, (f"{p}_add",)))
        return layers
    if kind == "transition":
        pad = cfg.k // 2
        layers = [LayerSpec(f"{p}_conv", "conv",
                            {"k": cfg.k, "stride": 1, "pad": pad,
                             "filters": cfg.filters}, ein)]
        layers += _bn_relu(f"{p}_conv", f"{p}_conv")
        layers.append(LayerSpec(f"{p}_pool", "avgpool",
                                {"k": cfg.pool, "stride": cfg.pool},
                                (f"{p}_conv_relu",)))
        return layers
    if kind == "dense_head":
        return [
            LayerSpec(f"{p}_fc1", "dense", {"units": cfg.hidden, "act": "relu"}, ein),
            LayerSpec(f"{p}_drop", "dropout", {"rate": cfg.dropout_rate},
                      (f"{p}_fc1",)),
            LayerSpec(f"{p}_fc2", "dense", {"units": cfg.classes, "act": "none"},
                      (f"{p}_drop",)),
            LayerSpec(f"{p}_softmax", "softmax", {}, (f"{p}_fc2",)),
        ]
    raise ConfigError(f"unknown block kind {kind!r}")


@dataclass(frozen=True)
class ResmonetProfile:
    """Channel/filter profile for the assembler.

    ``mobile_filters`` gives the pointwise width of each mobile block; if
    the model is deeper than the tuple, the last width doubles per extra
    block.
    """

    stem: StemConfig = StemConfig()
    mobile_filters: tuple[int, ...] = (64,)
    mobile_pool: int = 2
    residual_k: int = 3
    transition_filters: int = 32
    transition_pool: int = 2
    hidden: int = 256
    dropout_rate: float = 0.5


DEFAULT_PROFILE = ResmonetProfile()

# sized for 32x32 inputs and quick desk-scale training runs
SMALL_PROFILE = ResmonetProfile(
    stem=StemConfig(initial_filters=8, branch_mid=8, branch_out=8, out_filters=8),
    mobile_filters=(16,),
    transition_filters=16,
    hidden=64,
)


def _mobile_width(profile: ResmonetProfile, i: int) -> int:
    mf = profile.mobile_filters
    if i < len(mf):
        return mf[i]
    return mf[-1] * (2 ** (i - len(mf) + 1))


def assemble_resmonet(m: int = 1, r: int = 1,
                      profile: ResmonetProfile = DEFAULT_PROFILE,
                      input_shape: tuple[int, int, int] = (224, 224, 3),
                      num_classes: int = 7) -> ModelGraph:
    """Stem -> m mobile blocks -> r residual blocks -> transition -> dense head."""
    if m < 1 or r < 1:
        raise ConfigError(f"mobile depth and residual depth must be >= 1, got m={m} r={r}")
    layers = build_block("stem", None, profile.stem, prefix="stem")
    tip = layers[-1].name
    channels = profile.stem.out_filters
    for i in range(m):
        width = _mobile_width(profile, i)
        cfg = MobileConfig(filters=width, pool=profile.mobile_pool)
        blk = build_block("mobile", tip, cfg, prefix=f"mobile{i + 1}")
        layers += blk
        tip = blk[-1].name
        channels = width
    for i in range(r):
        cfg = ResidualConfig(channels=channels, k=profile.residual_k)
        blk = build_block("residual", tip, cfg, prefix=f"residual{i + 1}")
        layers += blk
        tip = blk[-1].name
    blk = build_block("transition", tip,
                      TransitionConfig(filters=profile.transition_filters,
                                       pool=profile.transition_pool),
                      prefix="transition")
    layers += blk
    tip = blk[-1].name
    layers += build_block("dense_head", tip,
                          DenseHeadConfig(hidden=profile.hidden,
                                          dropout_rate=profile.dropout_rate,
                                          classes=num_classes),
                          prefix="head")
    return ModelGraph(layers, input_shape, num_classes)


# ---------------------------------------------------------------------------
# Batched executor
# ---------------------------------------------------------------------------


def run_forward(graph: ModelGraph, arrays: Mapping[str, Mapping[str, np.ndarray]],
                batch: np.ndarray, mode: str = "infer",
                rng: np.random.Generator | None = None,
                want_caches: bool = False):
    """Forward pass over a batch (N leading axis).

    Returns (probs, caches) where caches is None unless requested.  In
    ``train`` mode batchnorm running statistics inside ``arrays`` are
    updated in place and dropout is active.
    """
    training = mode == "train"
    outs: dict[str, np.ndarray] = {}
    caches: dict[str, dict] | None = {} if want_caches else None
    probs = None
    for layer in graph.layers:
        xs = [outs[nm] for nm in layer.inputs] if layer.inputs else [batch]
        kind = layer.kind
        w = arrays.get(layer.name, {})
        if kind == "conv" or kind == "pointwise":
            y, cache = T.conv2d_fwd(xs[0], w["kernel"], w["bias"],
                                    int(layer.hp("stride", 1)),
                                    int(layer.hp("pad", 0)))
            cache["kind"] = "conv"
        elif kind == "depthwise":
            y, cache = T.depthwise_fwd(xs[0], w["kernel"], w["bias"],
                                       int(layer.hp("stride", 1)),
                                       int(layer.hp("pad", 0)))
        elif kind == "batchnorm":
            y, cache, rm, rv = T.batchnorm_fwd(
                xs[0], w["gamma"], w["beta"], w["running_mean"], w["running_var"],
                float(layer.hp("eps", 1e-5)), float(layer.hp("momentum", 0.99)),
                mode)
            if training:
                w["running_mean"][...] = rm
                w["running_var"][...] = rv
        elif kind == "relu":
            y, cache = T.relu_fwd(xs[0])
        elif kind in ("avgpool", "maxpool"):
            y, cache = T.pool_fwd(xs[0], kind[:3], int(layer.hp("k")),
                                  int(layer.hp("stride", int(layer.hp("k")))),
                                  int(layer.hp("pad", 0)))
        elif kind == "dense":
            x = xs[0]
            orig_shape = x.shape
            if x.ndim > 2:
                x = x.reshape(x.shape[0], -1)
            y, cache = T.dense_fwd(x, w["weight"], w["bias"],
                                   str(layer.hp("act", "none")))
            cache["orig_shape"] = orig_shape
        elif kind == "dropout":
            y, cache = T.dropout_fwd(xs[0], float(layer.hp("rate", 0.5)),
                                     rng, training)
        elif kind == "add":
            y, cache = T.add_fwd(xs)
        elif kind == "concat":
            y, cache = T.concat_fwd(xs)
        elif kind == "softmax":
            y = T.softmax_probs(xs[0])
            cache = {"kind": "softmax"}
            probs = y
        else:  # pragma: no cover - kinds are validated at graph build
            raise GraphError(f"unhandled kind {kind!r}")
        outs[layer.name] = y
        if caches is not None:
            caches[layer.name] = cache
    return probs, caches


def run_backward(graph: ModelGraph, caches: Mapping[str, dict],
                 dlogits: np.ndarray) -> dict[str, dict[str, np.ndarray]]:
    """Backward pass; ``dlogits`` is the loss gradient at the softmax input.

    Returns parameter gradients per parameterized layer.  The fused
    softmax/cross-entropy gradient is injected at the softmax layer's
    input, so the softmax layer itself is skipped.
    """
    softmax_layer = next(l for l in graph.layers if l.kind == "softmax")
    grads_out: dict[str, np.ndarray] = {softmax_layer.inputs[0]: np.asarray(dlogits)}
    pgrads: dict[str, dict[str, np.ndarray]] = {}
    for layer in reversed(graph.layers):
        if layer.kind == "softmax":
            continue
        dy = grads_out.pop(layer.name, None)
        if dy is None:
            raise GraphError(f"no upstream gradient reached layer {layer.name!r}")
        kind = "conv" if layer.kind == "pointwise" else layer.kind
        dx, dp = T.backward(kind, caches[layer.name], dy)
        if layer.kind == "dense":
            dx = dx.reshape(caches[layer.name]["orig_shape"])
        if dp:
            pgrads[layer.name] = dp
        dxs = dx if isinstance(dx, list) else [dx]
        for nm, d in zip(layer.inputs, dxs):
            if nm in grads_out:
                grads_out[nm] = grads_out[nm] + d
            else:
                grads_out[nm] = d
    return pgrads


def forward_model(graph: ModelGraph, store: WeightStore, x: T.Tensor) -> T.Tensor:
    """Class probabilities for one input; weights are validated first and
    dropout is inactive."""
    if x.shape != graph.input_shape:
        raise GraphError(f"input shape {x.shape} != graph input {graph.input_shape}")
    validate_weights(graph, store)
    arrays = {layer: {k: t.data for k, t in params.items()}
              for layer, params in store.items()}
    probs, _ = run_forward(graph, arrays, x.data[None], mode="infer")
    return T.Tensor(probs[0])


# ---------------------------------------------------------------------------
# Weight file I/O
# ---------------------------------------------------------------------------


def save_weights(store: WeightStore, path) -> None:
    chunks = [_MAGIC, struct.pack("<HI", _VERSION, len(store.layers()))]
    for layer, params in store.items():
        name = layer.encode("utf-8")
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<B", len(params)))
        for pname, t in params.items():
            nb = pname.encode("utf-8")
            chunks.append(struct.pack("<H", len(nb)))
            chunks.append(nb)
            chunks.append(struct.pack("<B", len(t.shape)))
            chunks.append(struct.pack(f"<{len(t.shape)}I", *t.shape))
            chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise WeightTruncationError(
                f"weight file truncated: needed {n} bytes at offset {self.off}, "
                f"only {len(self.blob) - self.off} remain")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(path, graph: ModelGraph | None = None) -> WeightStore:
    """Read a weight file; if ``graph`` is given, shapes are validated
    against it before the store is returned."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(len(_MAGIC)) != _MAGIC:
        raise WeightFormatError(f"bad magic; not a weight file: {path}")
    (version,) = r.unpack("<H")
    if version != _VERSION:
        raise WeightFormatError(f"unsupported weight file version {version}")
    (n_layers,) = r.unpack("<I")
    store = WeightStore()
    for _ in range(n_layers):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (n_tensors,) = r.unpack("<B")
        params: dict[str, T.Tensor] = {}
        for _ in range(n_tensors):
            (pn_len,) = r.unpack("<H")
            pname = r.take(pn_len).decode("utf-8")
            (rank,) = r.unpack("<B")
            dims = r.unpack(f"<{rank}I")
            count = 1
            for d in dims:
                count *= d
            raw = r.take(4 * count)
            arr = np.frombuffer(raw, dtype="<f4").reshape(dims)
            params[pname] = T.Tensor(arr)
        store.set(name, params)
    if r.off != len(blob):
        raise WeightFormatError(f"{len(blob) - r.off} trailing bytes after payload")
    if graph is not None:
        validate_weights(graph, store)
    return store


# ---------------------------------------------------------------------------
# Graph file I/O
# ---------------------------------------------------------------------------


def _fmt_value(v) -> str:
    if isinstance(v, float) and v == int(v):
        return str(v)
    return str(v)


def save_graph(graph: ModelGraph, path) -> None:
    lines = [f"# layers for a {graph.input_shape[0]}x{graph.input_shape[1]}x"
             f"{graph.input_shape[2]} input, {graph.num_classes} classes"]
    for layer in graph.layers:
        parts = [layer.name, layer.kind]
        parts += [f"{k}={_fmt_value(v)}" for k, v in sorted(layer.hyper.items())]
        if layer.inputs:
            parts.append("<-")
            parts.append(",".join(layer.inputs))
        lines.append(" ".join(parts))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_value(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def parse_graph(text: str, input_shape: tuple[int, int, int],
                num_classes: int | None = None) -> ModelGraph:
    """Parse the one-layer-per-line format.  ``num_classes`` defaults to
    the width of the softmax layer's input."""
    layers: list[LayerSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise GraphError(f"line {lineno}: expected 'name kind ...', got {raw!r}")
        name, kind = tokens[0], tokens[1]
        hyper: dict = {}
        inputs: tuple[str, ...] = ()
        rest = tokens[2:]
        if "<-" in rest:
            idx = rest.index("<-")
            inputs = tuple(x for x in ",".join(rest[idx + 1:]).split(",") if x)
            rest = rest[:idx]
        for tok in rest:
            if "=" not in tok:
                raise GraphError(f"line {lineno}: expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            hyper[k] = _parse_value(v)
        layers.append(LayerSpec(name, kind, hyper, inputs))
    if num_classes is None:
        num_classes = _infer_classes(layers, input_shape)
    return ModelGraph(layers, input_shape, num_classes)


def _infer_classes(layers: list[LayerSpec], input_shape) -> int:
    softmaxes = [l for l in layers if l.kind == "softmax"]
    if len(softmaxes) != 1:
        raise GraphError(f"graph must have exactly one softmax layer, "
                         f"found {len(softmaxes)}")
    feeder = softmaxes[0].inputs[0] if softmaxes[0].inputs else None
    for l in layers:
        if l.name == feeder and l.kind == "dense":
            return int(l.hp("units"))
    raise GraphError("cannot infer num_classes: softmax is not fed by a dense layer")


def load_graph(path, input_shape: tuple[int, int, int] = (224, 224, 3),
               num_classes: int | None = None) -> ModelGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_graph(fh.read(), input_shape, num_classes)
