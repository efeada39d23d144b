"""Static parameter and multiply-add accounting for layer graphs.

Two multiply-add conventions are implemented:

* ``PER_WEIGHT`` -- 2 operations per non-bias learnable scalar.  A conv
  layer contributes 2*k*k*c_in*c_out, a dense layer 2*n_in*n_out, a
  batchnorm layer 2*c (its per-channel scale counts as the one non-bias
  learnable).  By construction the total equals
  ``2 * (learnable_params - bias_params)``, which is asserted in tests.
  This is the convention used for comparison-table style reports.
* ``PER_ACTIVATION`` -- standard inference cost: multiply-adds counted at
  every output position (conv: k*k*c_in*c_out*H'*W'; depthwise:
  k*k*c_in*H'*W'; dense: n_in*n_out; batchnorm: one fused multiply-add per
  output element).  Pooling, ReLU, dropout, softmax, add and concat are
  counted as zero in both conventions since they perform no multiply-adds.

Parameter counts report two subtotals: ``np`` counts every stored scalar
(batchnorm contributes 4c including its running statistics, matching what
model-summary tools print as total parameters), ``np_learnable`` counts
only optimized scalars (batchnorm contributes 2c).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

from .errors import ConfigError
from .graph import ModelGraph, param_shapes

PER_WEIGHT = "PER_WEIGHT"
PER_ACTIVATION = "PER_ACTIVATION"

_CSV_HEADER = "model,np,multadds_per_weight,multadds_per_activation,accuracy,rte_s,mmu_mb"


@dataclass(frozen=True)
class LayerCost:
    name: str
    np: int
    np_learnable: int
    bias: int
    multadds_per_weight: int
    multadds_per_activation: int


@dataclass(frozen=True)
class Measured:
    """Optional measured columns for one model row."""

    accuracy: float | None = None
    rte_seconds: float | None = None
    mmu_megabytes: float | None = None


@dataclass
class ModelRow:
    model: str
    layers: list[LayerCost]
    total_np: int
    total_np_learnable: int
    total_bias: int
    total_multadds_per_weight: int
    total_multadds_per_activation: int
    measured: Measured = field(default_factory=Measured)


@dataclass
class EfficiencyReport:
    rows: list[ModelRow]


def _layer_param_counts(layer, in_shape) -> tuple[int, int, int]:
    """(stored, learnable, bias) scalar counts for one layer."""
    shapes = param_shapes(layer, in_shape)
    if not shapes:
        return 0, 0, 0
    stored = sum(_prod(s) for s in shapes.values())
    if layer.kind == "batchnorm":
        c = in_shape[-1]
        return stored, 2 * c, c  # gamma+beta learnable; beta is the bias-like one
    bias = _prod(shapes["bias"])
    return stored, stored, bias


def _prod(shape) -> int:
    out = 1
    for d in shape:
        out *= d
    return out


def count_params(graph: ModelGraph):
    """Per-layer (stored, learnable, bias) counts plus totals."""
    shapes = graph.shapes
    per_layer = {}
    for layer in graph.layers:
        in_shape = shapes[layer.inputs[0]] if layer.inputs else graph.input_shape
        per_layer[layer.name] = _layer_param_counts(layer, in_shape)
    totals = tuple(sum(t[i] for t in per_layer.values()) for i in range(3))
    return per_layer, {"np": totals[0], "np_learnable": totals[1], "bias": totals[2]}


def _layer_multadds(layer, in_shape, out_shape, convention: str) -> int:
    kind = layer.kind
    if convention == PER_WEIGHT:
        _, learnable, bias = _layer_param_counts(layer, in_shape)
        return 2 * (learnable - bias)
    if kind in ("conv", "pointwise"):
        k = 1 if kind == "pointwise" else int(layer.hp("k"))
        return k * k * in_shape[-1] * out_shape[-1] * out_shape[0] * out_shape[1]
    if kind == "depthwise":
        k = int(layer.hp("k"))
        return k * k * in_shape[-1] * out_shape[0] * out_shape[1]
    if kind == "dense":
        return _prod(in_shape) * out_shape[0]
    if kind == "batchnorm":
        return _prod(in_shape)
    return 0


def count_multadds(graph: ModelGraph, convention: str = PER_WEIGHT):
    """Per-layer multiply-add counts plus the total, under one convention."""
    if convention not in (PER_WEIGHT, PER_ACTIVATION):
        raise ConfigError(f"unknown multiply-add convention {convention!r}")
    shapes = graph.shapes
    per_layer = {}
    for layer in graph.layers:
        in_shape = shapes[layer.inputs[0]] if layer.inputs else graph.input_shape
        per_layer[layer.name] = _layer_multadds(layer, in_shape,
                                                shapes[layer.name], convention)
    return per_layer, sum(per_layer.values())


def analyze(model_name: str, graph: ModelGraph,
            measured: Measured | None = None) -> ModelRow:
    """Full per-layer cost breakdown for one graph."""
    shapes = graph.shapes
    layers = []
    for layer in graph.layers:
        in_shape = shapes[layer.inputs[0]] if layer.inputs else graph.input_shape
        stored, learnable, bias = _layer_param_counts(layer, in_shape)
        layers.append(LayerCost(
            name=layer.name, np=stored, np_learnable=learnable, bias=bias,
            multadds_per_weight=_layer_multadds(layer, in_shape,
                                                shapes[layer.name], PER_WEIGHT),
            multadds_per_activation=_layer_multadds(layer, in_shape,
                                                    shapes[layer.name],
                                                    PER_ACTIVATION)))
    return ModelRow(
        model=model_name,
        layers=layers,
        total_np=sum(c.np for c in layers),
        total_np_learnable=sum(c.np_learnable for c in layers),
        total_bias=sum(c.bias for c in layers),
        total_multadds_per_weight=sum(c.multadds_per_weight for c in layers),
        total_multadds_per_activation=sum(c.multadds_per_activation for c in layers),
        measured=measured or Measured(),
    )


def report(models: list[tuple[str, ModelGraph]] | list[tuple[str, ModelGraph, Measured]]
           ) -> EfficiencyReport:
    """One row per model, in input order."""
    rows = []
    for entry in models:
        name, graph = entry[0], entry[1]
        measured = entry[2] if len(entry) > 2 else None
        rows.append(analyze(name, graph, measured))
    return EfficiencyReport(rows)


def _fmt_measured(value, pattern="{:.2f}") -> str:
    return "—" if value is None else pattern.format(value)


def render_text(rep: EfficiencyReport) -> str:
    """Fixed-width table: Model NP Mult-Add Ops. Accuracy RTE MMU."""
    headers = ["Model", "NP", "Mult-Add Ops.", "Accuracy", "RTE", "MMU"]
    rows = []
    for r in rep.rows:
        rows.append([
            r.model,
            f"{r.total_np:,}",
            f"{r.total_multadds_per_weight:,}",
            _fmt_measured(r.measured.accuracy),
            _fmt_measured(r.measured.rte_seconds, "{:.2f} sec."),
            _fmt_measured(r.measured.mmu_megabytes, "{:.2f} MB"),
        ])
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    out = io.StringIO()
    out.write("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip() + "\n")
    for row in rows:
        out.write("  ".join(row[i].ljust(widths[i]) for i in range(len(headers))).rstrip() + "\n")
    return out.getvalue()


def _csv_cell(value, pattern="{:.6g}") -> str:
    return "" if value is None else pattern.format(value)


def render_csv(rep: EfficiencyReport) -> str:
    lines = [_CSV_HEADER]
    for r in rep.rows:
        lines.append(",".join([
            r.model,
            str(r.total_np),
            str(r.total_multadds_per_weight),
            str(r.total_multadds_per_activation),
            _csv_cell(r.measured.accuracy),
            _csv_cell(r.measured.rte_seconds),
            _csv_cell(r.measured.mmu_megabytes),
        ]))
    return "\n".join(lines) + "\n"
