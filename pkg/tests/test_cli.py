"""CLI verbs driven in-process through main(argv)."""

import os
from pathlib import Path

import numpy as np
import pytest

from resmonet.cli import main
from resmonet.graph import SMALL_PROFILE, assemble_resmonet, save_graph
from resmonet.synthetic import generate_dataset
from resmonet.vision import Image, read_ppm, write_ppm

COHORT_CSV = str(Path(__file__).parent / "data" / "experts.csv")


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory):
    """A quickly trained desk-scale model (weights + sidecar graph)."""
    root = tmp_path_factory.mktemp("cli-train")
    dataset = root / "dataset"
    generate_dataset(dataset, per_class=6, side=32, seed=0)
    out = root / "model.rmnw"
    history = root / "history.csv"
    code = main(["train", str(dataset), "--epochs", "2", "--batch", "16",
                 "--seed", "1", "--lr", "0.02",
                 "--out", str(out), "--history", str(history)])
    assert code == 0
    return {"weights": out, "history": history, "dataset": dataset}


class TestUsage:
    def test_unknown_verb_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["score", "x.csv", "--nope"]) == 1

    def test_runtime_failure_is_exit_2(self, capsys):
        assert main(["score", "/does/not/exist.csv"]) == 2
        err = capsys.readouterr().err
        assert "FileNotFoundError" in err


class TestAnalyze:
    def test_single_graph_row(self, tmp_path, capsys):
        g = assemble_resmonet(profile=SMALL_PROFILE, input_shape=(32, 32, 3))
        path = tmp_path / "resmonet.graph"
        save_graph(g, path)
        assert main(["analyze", str(path), "--input-shape", "32x32x3"]) == 0
        out = capsys.readouterr().out
        lines = out.splitlines()
        assert lines[0].startswith("Model")
        assert lines[1].startswith("resmonet")
        assert len(lines) == 2

    def test_csv_output(self, tmp_path, capsys):
        g = assemble_resmonet(profile=SMALL_PROFILE, input_shape=(32, 32, 3))
        path = tmp_path / "m.graph"
        save_graph(g, path)
        assert main(["analyze", str(path), "--input-shape", "32x32x3", "--csv"]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].startswith("model,np,")


class TestScore:
    def test_cohort_totals(self, capsys):
        assert main(["score", COHORT_CSV]) == 0
        out = capsys.readouterr().out
        assert "Total weighted usability: 73.8 (Good)" in out
        assert "Total weighted utility: 3.94" in out


class TestAugment:
    def test_writes_twelve_files_in_order(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        src = tmp_path / "face.ppm"
        write_ppm(Image(rng.integers(0, 256, (224, 224, 3), dtype=np.uint8)), src)
        outdir = tmp_path / "out"
        assert main(["augment", str(src), str(outdir)]) == 0
        files = sorted(os.listdir(outdir))
        assert files == [f"aug_{i:02d}.ppm" for i in range(12)]
        first = read_ppm(outdir / "aug_00.ppm")
        assert np.array_equal(first.pixels, read_ppm(src).pixels)


class TestTrainInferProfile:
    def test_train_wrote_artifacts(self, trained_model):
        assert trained_model["weights"].exists()
        assert trained_model["weights"].with_suffix(".graph").exists()
        lines = trained_model["history"].read_text().splitlines()
        assert lines[0] == "epoch,train_loss,train_acc,test_loss,test_acc"
        assert len(lines) == 3

    def test_infer_probabilities_sum_to_one(self, trained_model, capsys):
        image = next((trained_model["dataset"] / "anger").iterdir())
        assert main(["infer", str(trained_model["weights"]), str(image)]) == 0
        out = capsys.readouterr().out
        probs = [float(p) for p in out.split()]
        assert len(probs) == 7
        assert abs(sum(probs) - 1.0) <= 1e-6

    def test_infer_is_deterministic(self, trained_model, capsys):
        image = next((trained_model["dataset"] / "fear").iterdir())
        main(["infer", str(trained_model["weights"]), str(image)])
        first = capsys.readouterr().out
        main(["infer", str(trained_model["weights"]), str(image)])
        assert capsys.readouterr().out == first

    def test_profile_smoke(self, trained_model, capsys):
        code = main(["profile", str(trained_model["weights"]),
                     "--runs", "1", "--duration", "0.3"])
        assert code == 0
        out = capsys.readouterr().out
        assert "RTE:" in out and "MMU:" in out and "environment:" in out

    def test_missing_sidecar_graph_is_usage_error(self, tmp_path, capsys):
        orphan = tmp_path / "orphan.rmnw"
        orphan.write_bytes(b"RMNW\x01\x00\x00\x00\x00\x00")
        assert main(["infer", str(orphan), "x.ppm"]) == 1
        assert "graph" in capsys.readouterr().err
