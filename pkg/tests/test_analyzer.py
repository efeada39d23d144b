"""Parameter and multiply-add accounting against brute-force enumeration."""

import numpy as np
import pytest

from resmonet.analyzer import (
    PER_ACTIVATION,
    PER_WEIGHT,
    Measured,
    analyze,
    count_multadds,
    count_params,
    render_csv,
    render_text,
    report,
)
from resmonet.errors import ConfigError
from resmonet.graph import (
    DEFAULT_PROFILE,
    SMALL_PROFILE,
    LayerSpec,
    ModelGraph,
    ResmonetProfile,
    StemConfig,
    assemble_resmonet,
)
from resmonet.trainer import init_weights

# Published comparison-table rows: (total parameters, multiply-add count)
TABLE_ROWS = {
    "IDNN": (16_158_790, 32_302_489),
    "EDNN": (4_621_638, 9_235_929),
    "1.0 MobileNet": (3_235_014, 6_481_263),
    "0.75 MobileNet": (1_837_590, 3_683_679),
    "PeleeNet": (2_123_502, 4_239_183),
    "ResMoNet": (1_721_614, 3_439_778),
}

# the reconstructed default profile lands here (0.56% under the published row)
DEFAULT_PROFILE_NP = 1_712_055


def corpus_graphs():
    """A varied set of validating graphs for enumeration cross-checks."""
    graphs = [
        ("resmonet_small", assemble_resmonet(profile=SMALL_PROFILE,
                                             input_shape=(32, 32, 3))),
        ("resmonet_m2_r2", assemble_resmonet(
            m=2, r=2, profile=SMALL_PROFILE, input_shape=(64, 64, 3))),
        ("resmonet_default", assemble_resmonet()),
    ]
    rng = np.random.default_rng(123)
    for i in range(20):
        filters = int(rng.integers(2, 9))
        units = int(rng.integers(3, 17))
        k = int(rng.integers(1, 4))
        side = int(rng.integers(k + 3, 17))
        channels = int(rng.integers(1, 4))
        classes = int(rng.integers(2, 9))
        layers = [
            LayerSpec("c1", "conv", {"k": k, "stride": 1, "pad": k // 2,
                                     "filters": filters}, ()),
            LayerSpec("c1_bn", "batchnorm", {}, ("c1",)),
            LayerSpec("c1_relu", "relu", {}, ("c1_bn",)),
            LayerSpec("dw", "depthwise", {"k": 3, "stride": 1, "pad": 1}, ("c1_relu",)),
            LayerSpec("pw", "pointwise", {"filters": filters}, ("dw",)),
            LayerSpec("skip", "add", {}, ("pw", "c1_relu")),
            LayerSpec("cat", "concat", {}, ("skip", "c1_relu")),
            LayerSpec("pool", "avgpool", {"k": 2, "stride": 2}, ("cat",)),
            LayerSpec("fc1", "dense", {"units": units, "act": "relu"}, ("pool",)),
            LayerSpec("drop", "dropout", {"rate": 0.5}, ("fc1",)),
            LayerSpec("fc2", "dense", {"units": classes}, ("drop",)),
            LayerSpec("sm", "softmax", {}, ("fc2",)),
        ]
        graphs.append((f"rand{i}", ModelGraph(layers, (side, side, channels), classes)))
    return graphs


def enumerate_store_scalars(graph, learnable_only=False):
    """Brute-force oracle: count every scalar in a fresh weight store."""
    store = init_weights(graph, seed=0)
    total = 0
    for layer_name, params in store.items():
        for pname, t in params.items():
            if learnable_only and pname in ("running_mean", "running_var"):
                continue
            total += int(np.asarray(t.data).size)
    return total


class TestCountParams:
    def test_first_conv_of_default_profile(self):
        # k=3, c_in=3, c_out=32 -> 3*3*3*32 + 32 = 896
        g = assemble_resmonet()
        per, _ = count_params(g)
        assert per["stem_conv1"][0] == 896

    def test_dense_256_to_7(self):
        g = assemble_resmonet()
        per, _ = count_params(g)
        assert per["head_fc2"][0] == 256 * 7 + 7 == 1799

    @pytest.mark.parametrize("name,graph", corpus_graphs()[:6])
    def test_equals_brute_force_enumeration(self, name, graph):
        _, totals = count_params(graph)
        assert totals["np"] == enumerate_store_scalars(graph)
        assert totals["np_learnable"] == enumerate_store_scalars(graph, True)

    def test_zero_param_layer_changes_nothing(self):
        layers = [
            LayerSpec("fc", "dense", {"units": 5}, ()),
            LayerSpec("sm", "softmax", {}, ("fc",)),
        ]
        g1 = ModelGraph(layers, (1, 1, 10), 5)
        layers2 = [
            LayerSpec("fc", "dense", {"units": 5}, ()),
            LayerSpec("noop", "relu", {}, ("fc",)),
            LayerSpec("sm", "softmax", {}, ("noop",)),
        ]
        g2 = ModelGraph(layers2, (1, 1, 10), 5)
        assert count_params(g1)[1] == count_params(g2)[1]

    def test_doubling_filters_doubles_kernel_contribution(self):
        def conv_np(filters):
            layers = [
                LayerSpec("c", "conv", {"k": 3, "filters": filters, "pad": 1}, ()),
                LayerSpec("fc", "dense", {"units": 4}, ("c",)),
                LayerSpec("sm", "softmax", {}, ("fc",)),
            ]
            g = ModelGraph(layers, (6, 6, 3), 4)
            per, _ = count_params(g)
            stored, _, bias = per["c"]
            return stored - bias, bias
        k1, b1 = conv_np(8)
        k2, b2 = conv_np(16)
        assert k2 == 2 * k1 and b2 == 2 * b1

    def test_default_profile_golden_number(self):
        _, totals = count_params(assemble_resmonet())
        assert totals["np"] == DEFAULT_PROFILE_NP


class TestCountMultadds:
    def _dense_graph(self):
        layers = [
            LayerSpec("fc", "dense", {"units": 5}, ()),
            LayerSpec("sm", "softmax", {}, ("fc",)),
        ]
        return ModelGraph(layers, (1, 1, 10), 5)

    def test_dense_10_to_5_per_activation(self):
        per, total = count_multadds(self._dense_graph(), PER_ACTIVATION)
        assert per["fc"] == 50 and total == 50

    def test_dense_10_to_5_per_weight(self):
        per, total = count_multadds(self._dense_graph(), PER_WEIGHT)
        assert per["fc"] == 100 and total == 100  # 2 * (55 - 5)

    def test_unknown_convention(self):
        with pytest.raises(ConfigError):
            count_multadds(self._dense_graph(), "PER_FLOP")

    @pytest.mark.parametrize("model,row", sorted(TABLE_ROWS.items()))
    def test_published_rows_match_per_weight_hypothesis(self, model, row):
        np_count, multadds = row
        assert abs(2 * np_count - multadds) / multadds < 0.005

    @pytest.mark.parametrize("name,graph", corpus_graphs()[:5])
    def test_per_weight_identity(self, name, graph):
        _, totals = count_params(graph)
        _, mw = count_multadds(graph, PER_WEIGHT)
        assert mw == 2 * (totals["np_learnable"] - totals["bias"])


class TestReport:
    def test_missing_measured_renders_dashes(self):
        rep = report([("ResMoNet", assemble_resmonet(profile=SMALL_PROFILE,
                                                     input_shape=(32, 32, 3)))])
        text = render_text(rep)
        assert "—" in text
        assert text.splitlines()[0].startswith("Model")

    def test_rows_keep_input_order(self):
        g = assemble_resmonet(profile=SMALL_PROFILE, input_shape=(32, 32, 3))
        rep = report([("bbb", g), ("aaa", g)])
        lines = render_text(rep).splitlines()
        assert lines[1].startswith("bbb") and lines[2].startswith("aaa")

    def test_totals_cross_check(self):
        g = assemble_resmonet(profile=SMALL_PROFILE, input_shape=(32, 32, 3))
        row = analyze("m", g)
        _, totals = count_params(g)
        _, mw = count_multadds(g, PER_WEIGHT)
        _, ma = count_multadds(g, PER_ACTIVATION)
        assert row.total_np == totals["np"]
        assert row.total_multadds_per_weight == mw
        assert row.total_multadds_per_activation == ma

    def test_csv_columns(self):
        g = assemble_resmonet(profile=SMALL_PROFILE, input_shape=(32, 32, 3))
        rep = report([("m", g, Measured(accuracy=0.9, rte_seconds=0.01,
                                        mmu_megabytes=120.5))])
        lines = render_csv(rep).splitlines()
        assert lines[0] == ("model,np,multadds_per_weight,multadds_per_activation,"
                            "accuracy,rte_s,mmu_mb")
        cells = lines[1].split(",")
        assert cells[0] == "m" and cells[4] == "0.9" and cells[6] == "120.5"
