"""Mini-batch SGD training, evaluation, and history export.

The optimizer is SGD with momentum (defaults 0.01 / 0.9).  Initialization
is fan-in-scaled uniform (bound sqrt(6/fan_in)) for conv and dense kernels,
zeros for biases, identity for batchnorm -- all drawn from numpy's seeded
PCG64 generator, so a (seed, config, data) triple reproduces every weight
bit and every history entry.  The last partial batch of an epoch is used,
not dropped.

Reported train loss/accuracy come from the training-mode forward passes
(dropout active, batch statistics); test loss/accuracy are evaluated after
every epoch in inference mode on the original test images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import TrainingDiverged
from .graph import ModelGraph, WeightStore, param_shapes, run_backward, run_forward
from .vision import DatasetSplit, LabeledExample, to_unit_floats

_EVAL_CHUNK = 64
_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 128
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    dropout_rate: float | None = None  # None keeps the graph's own rates

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            # 0 is allowed: it makes training a (useful-for-testing) no-op
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError(f"momentum must be in [0,1), got {self.momentum}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float


@dataclass
class TrainHistory:
    records: list[EpochStats] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass
class ConfusionMatrix:
    """n x n integer counts; rows are true classes, columns predictions."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @property
    def accuracy(self) -> float:
        total = int(self.counts.sum())
        return float(np.trace(self.counts)) / total if total else 0.0

    def normalized(self) -> np.ndarray:
        """Row-normalized view; all-zero rows stay zero."""
        sums = self.counts.sum(axis=1, keepdims=True)
        out = np.zeros(self.counts.shape, dtype=np.float64)
        np.divide(self.counts, sums, out=out, where=sums > 0)
        return out


def init_weights(graph: ModelGraph, seed: int = 0) -> WeightStore:
    """Fresh parameter tensors for every parameterized layer."""
    rng = np.random.default_rng(seed)
    shapes = graph.shapes
    store = WeightStore()
    for layer in graph.layers:
        in_shape = shapes[layer.inputs[0]] if layer.inputs else graph.input_shape
        need = param_shapes(layer, in_shape)
        if not need:
            continue
        params: dict[str, T.Tensor] = {}
        if layer.kind == "batchnorm":
            c = in_shape[-1]
            params["gamma"] = T.Tensor(np.ones(c, dtype=np.float32))
            params["beta"] = T.Tensor(np.zeros(c, dtype=np.float32))
            params["running_mean"] = T.Tensor(np.zeros(c, dtype=np.float32))
            params["running_var"] = T.Tensor(np.ones(c, dtype=np.float32))
        else:
            kshape = need["kernel"] if "kernel" in need else need["weight"]
            if layer.kind == "depthwise":
                fan_in = kshape[0] * kshape[1]
            elif layer.kind == "dense":
                fan_in = kshape[0]
            else:
                fan_in = kshape[0] * kshape[1] * kshape[2]
            bound = math.sqrt(6.0 / fan_in)
            kern = rng.uniform(-bound, bound, size=kshape).astype(np.float32)
            params["kernel" if "kernel" in need else "weight"] = T.Tensor(kern)
            params["bias"] = T.Tensor(np.zeros(need["bias"], dtype=np.float32))
        store.set(layer.name, params)
    return store


def _stack_examples(examples: list[LabeledExample]):
    x = np.stack([to_unit_floats(e.image) for e in examples])
    y = np.array([e.label for e in examples], dtype=np.int64)
    return x, y


def _batch_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, _LOG_FLOOR)).mean())


def _eval_arrays(graph: ModelGraph, arrays, x: np.ndarray, y: np.ndarray):
    """(loss, accuracy, confusion) in inference mode, chunked."""
    n = len(y)
    cm = np.zeros((graph.num_classes, graph.num_classes), dtype=np.int64)
    loss_sum = 0.0
    for start in range(0, n, _EVAL_CHUNK):
        xb = x[start:start + _EVAL_CHUNK]
        yb = y[start:start + _EVAL_CHUNK]
        probs, _ = run_forward(graph, arrays, xb, mode="infer")
        picked = probs[np.arange(len(yb)), yb]
        loss_sum += float(-np.log(np.maximum(picked, _LOG_FLOOR)).sum())
        preds = probs.argmax(axis=1)  # ties resolve to the lowest class index
        for t, p in zip(yb, preds):
            cm[t, p] += 1
    acc = float(np.trace(cm)) / n
    return loss_sum / n, acc, ConfusionMatrix(cm)


def _effective_graph(graph: ModelGraph, cfg: TrainConfig) -> ModelGraph:
    if cfg.dropout_rate is None:
        return graph
    layers = []
    for layer in graph.layers:
        if layer.kind == "dropout":
            hyper = dict(layer.hyper)
            hyper["rate"] = cfg.dropout_rate
            layer = type(layer)(layer.name, layer.kind, hyper, layer.inputs)
        layers.append(layer)
    return ModelGraph(layers, graph.input_shape, graph.num_classes)


def train(graph: ModelGraph, split: DatasetSplit,
          cfg: TrainConfig = TrainConfig()) -> tuple[WeightStore, TrainHistory]:
    """Run the full training loop and return final weights plus history."""
    if not split.train:
        raise ValueError("training set is empty")
    graph = _effective_graph(graph, cfg)
    x_train, y_train = _stack_examples(split.train)
    have_test = bool(split.test)
    if have_test:
        x_test, y_test = _stack_examples(split.test)

    rng = np.random.default_rng(cfg.seed)
    arrays = init_weights(graph, cfg.seed).arrays()
    velocity = {layer: {k: np.zeros_like(a) for k, a in params.items()}
                for layer, params in arrays.items()}

    history = TrainHistory()
    n = len(y_train)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        loss_weighted = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            probs, caches = run_forward(graph, arrays, xb, mode="train",
                                        rng=rng, want_caches=True)
            loss = _batch_loss(probs, yb)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}")
            loss_weighted += loss * len(yb)
            correct += int((probs.argmax(axis=1) == yb).sum())
            dlogits = probs.astype(np.float64)
            dlogits[np.arange(len(yb)), yb] -= 1.0
            dlogits = (dlogits / len(yb)).astype(np.float32)
            pgrads = run_backward(graph, caches, dlogits)
            for layer, grads in pgrads.items():
                for pname, g in grads.items():
                    v = velocity[layer][pname]
                    v *= cfg.momentum
                    v -= cfg.learning_rate * g
                    arrays[layer][pname] += v
        if have_test:
            test_loss, test_acc, _ = _eval_arrays(graph, arrays, x_test, y_test)
        else:
            test_loss, test_acc = math.nan, math.nan
        history.records.append(EpochStats(
            epoch=epoch,
            train_loss=loss_weighted / n,
            train_acc=correct / n,
            test_loss=test_loss,
            test_acc=test_acc))
    return WeightStore.from_arrays(arrays), history


def evaluate(graph: ModelGraph, store: WeightStore,
             testset: list[LabeledExample]) -> tuple[float, ConfusionMatrix]:
    """Accuracy and confusion matrix on a test set (argmax prediction,
    ties broken by the lowest class index)."""
    if not testset:
        raise ValueError("test set is empty")
    arrays = {layer: {k: t.data for k, t in params.items()}
              for layer, params in store.items()}
    x, y = _stack_examples(testset)
    _, acc, cm = _eval_arrays(graph, arrays, x, y)
    return acc, cm


def export_history(history: TrainHistory, path) -> None:
    """CSV with header epoch,train_loss,train_acc,test_loss,test_acc."""
    lines = ["epoch,train_loss,train_acc,test_loss,test_acc"]
    for rec in history:
        lines.append(f"{rec.epoch},{rec.train_loss:.6g},{rec.train_acc:.6g},"
                     f"{rec.test_loss:.6g},{rec.test_acc:.6g}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
