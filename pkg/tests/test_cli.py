import json
import subprocess
import sys

import numpy as np
import pytest

from fusseg.cli import main
from fusseg.io import read_json, read_label_map, read_mask, read_tensor, write_csv, write_label_map

PHANTOM = ["--count", "3", "--frames", "6", "--height", "16", "--width", "16", "--factor", "8",
           "--vessels", "3", "--min-width", "4", "--max-width", "8"]
TRAIN = ["--arch", "unet", "--loss", "dice_ce", "--frames", "4", "--epochs", "2", "--base-width", "4",
         "--depth", "2"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("phantom", "--seed", 1, "--out", root / "rest", "--mode", "rest", *PHANTOM) == 0
    assert run("phantom", "--seed", 1, "--out", root / "stim", "--mode", "stim", "--start", 10, *PHANTOM) == 0
    return root


def test_phantom_layout(data):
    index = read_json(data / "rest" / "index.json")
    assert index["subjects"] == ["s1-0", "s1-1", "s1-2"]
    d = data / "rest" / "s1-0"
    for name in ("stack.f32", "ulm.f32", "labels.pgm", "down.pgm", "up.pgm", "manifest.json"):
        assert (d / name).exists()
    frames, meta = read_tensor(d / "stack.f32")
    assert frames.shape == (6, 16, 16) and meta["condition"] == "rest"


def test_annotate(data, tmp_path, capsys):
    assert run("annotate", "--ulm", data / "rest" / "s1-0" / "ulm.f32", "--height", 16, "--width", 16,
               "--out", tmp_path / "a") == 0
    assert "mixed pixel fraction" in capsys.readouterr().out
    np.testing.assert_array_equal(read_label_map(tmp_path / "a_labels.pgm").labels,
                                  read_label_map(data / "rest" / "s1-0" / "labels.pgm").labels)
    np.testing.assert_array_equal(read_mask(tmp_path / "a_down.pgm"), read_mask(data / "rest" / "s1-0" / "down.pgm"))


def test_train_predict_eval(data, tmp_path):
    assert run("train", "--data", data / "rest", "--out", tmp_path / "m", "--seed", 0, *TRAIN) == 0
    manifest = read_json(tmp_path / "m" / "model.json")
    assert manifest["format_version"] == 1 and manifest["run_config"]["epochs"] == 2
    assert len((tmp_path / "m" / "loss_curve.csv").read_text().splitlines()) == 3
    stack = data / "stim" / "s1-10" / "stack.f32"
    assert run("predict", "--model", tmp_path / "m", "--stack", stack, "--out", tmp_path / "p") == 0
    probs, _ = read_tensor(tmp_path / "p_probs.f32")
    np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-5)
    assert run("eval", "--pred", tmp_path / "p_labels.pgm", "--truth", data / "stim" / "s1-10" / "labels.pgm",
               "--report", tmp_path / "r.json") == 0
    assert "f1" in read_json(tmp_path / "r.json")


def test_config_file_with_flag_override(data, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"architecture": "resunet", "loss": "cf", "frames": 4, "epochs": 1,
                               "base_width": 4, "depth": 2}))
    assert run("train", "--data", data / "rest", "--config", cfg, "--epochs", 2, "--out", tmp_path / "m") == 0
    rc = read_json(tmp_path / "m" / "model.json")["run_config"]
    assert rc["architecture"] == "resunet" and rc["epochs"] == 2


def test_xval_and_depth_sweep(data, tmp_path):
    assert run("xval", "--data", data / "rest", "--out", tmp_path / "x", "--folds", 3, "--archs", "unet,resunet",
               *TRAIN) == 0
    rep = read_json(tmp_path / "x" / "report.json")
    assert len(rep["results"]) == 2 and len(rep["comparisons"]) == 1
    assert run("depth-sweep", "--data", data / "rest", "--depths", "1,4", "--folds", 3, "--out", tmp_path / "d",
               *TRAIN) == 0
    lines = (tmp_path / "d" / "boxplot.csv").read_text().splitlines()
    assert lines[0] == "depth,fold,f1,jaccard" and len(lines) == 7


def test_cross_condition(data, tmp_path):
    assert run("cross-condition", "--train", data / "rest", "--test", data / "stim", "--out", tmp_path / "c",
               *TRAIN) == 0
    table = read_json(tmp_path / "c" / "report.json")["table"]
    assert {"accuracy", "precision", "recall", "f1", "specificity", "jaccard"} <= set(table)


def test_cross_condition_overlap_is_validation_error(data, tmp_path):
    assert run("cross-condition", "--train", data / "rest", "--test", data / "rest", "--out", tmp_path,
               *TRAIN) == 2


def test_signal_overlay_errors(data, tmp_path, capsys):
    d = data / "stim" / "s1-10"
    assert run("signal", "--stack", d / "stack.f32", "--mask", d / "labels.pgm", "--class", "d",
               "--pct-baseline", 2, "--out", tmp_path / "s.csv") == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "frame,time_s,signal,percent_change" and len(lines) == 7
    assert run("signal", "--stack", d / "stack.f32", "--mask", d / "down.pgm", "--roi", "0:8,0:16",
               "--out", tmp_path / "s2.csv") == 0
    assert run("overlay", "--stack", d / "stack.f32", "--labels", d / "labels.pgm", "--frame", 3,
               "--out", tmp_path / "o.png") == 0
    assert (tmp_path / "o.png").read_bytes()[:4] == b"\x89PNG"
    assert run("overlay", "--stack", d / "stack.f32", "--labels", d / "labels.pgm", "--frame", 6,
               "--out", tmp_path / "o2.png") == 2
    capsys.readouterr()
    assert run("errors", "--pred", d / "labels.pgm", "--truth", d / "labels.pgm", "--out", tmp_path / "e") == 0
    assert "FP=0 FN=0" in capsys.readouterr().out


def test_stats(tmp_path, capsys):
    write_csv(tmp_path / "a.csv", ["f1"], [[v] for v in (1, 2, 3, 4, 5)])
    write_csv(tmp_path / "b.csv", ["f1"], [[0]] * 5)
    assert run("stats", "wilcoxon", "--a", tmp_path / "a.csv", "--b", tmp_path / "b.csv", "--column", "f1") == 0
    assert json.loads(capsys.readouterr().out)["pvalue"] == 0.0625
    assert run("stats", "pearson", "--a", tmp_path / "a.csv", "--b", tmp_path / "a.csv") == 0
    assert json.loads(capsys.readouterr().out)["r"] == pytest.approx(1.0)
    assert run("stats", "wilcoxon", "--a", tmp_path / "a.csv", "--b", tmp_path / "a.csv") == 2


def test_validation_errors(tmp_path):
    assert run("eval", "--pred", tmp_path / "missing.pgm", "--truth", tmp_path / "missing.pgm") == 2
    (tmp_path / "bad.pgm").write_bytes(b"P5\n2 2\n255\n\x00\x01\x02\x09")
    write_label_map(tmp_path / "ok.pgm", np.zeros((2, 2), np.uint8))
    assert run("eval", "--pred", tmp_path / "bad.pgm", "--truth", tmp_path / "ok.pgm") == 2
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"architecture": "unet", "bogus": 1}))
    assert run("train", "--data", tmp_path, "--config", bad, "--out", tmp_path / "m") == 2


def test_runtime_failure_exit_code(monkeypatch, tmp_path):
    import fusseg.cli as cli

    def boom(pred, truth):
        raise RuntimeError("boom")

    write_label_map(tmp_path / "ok.pgm", np.zeros((2, 2), np.uint8))
    monkeypatch.setattr(cli, "evaluate", boom)
    assert run("eval", "--pred", tmp_path / "ok.pgm", "--truth", tmp_path / "ok.pgm") == 1


def test_console_script_entry():
    out = subprocess.run([sys.executable, "-m", "fusseg.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
    out = subprocess.run([sys.executable, "-m", "fusseg.cli", "train"], capture_output=True, text=True)
    assert out.returncode == 2


def test_same_seed_reproduces_outputs(data, tmp_path):
    for tag in ("a", "b"):
        assert run("phantom", "--seed", 5, "--out", tmp_path / tag / "ph", *PHANTOM) == 0
        assert run("train", "--data", tmp_path / tag / "ph", "--seed", 3, "--out", tmp_path / tag / "m", *TRAIN) == 0
        assert run("predict", "--model", tmp_path / tag / "m", "--stack", tmp_path / tag / "ph" / "s5-1" / "stack.f32",
                   "--out", tmp_path / tag / "p") == 0
        assert run("xval", "--data", tmp_path / tag / "ph", "--folds", 3, "--seed", 3, "--out", tmp_path / tag / "x",
                   *TRAIN) == 0
    same = lambda rel: (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    for rel in ("ph/index.json", "ph/s5-0/manifest.json", "ph/s5-0/labels.pgm", "ph/s5-2/stack.f32",
                "m/model.json", "m/loss_curve.csv", "p_labels.pgm", "p_down.pgm", "p_up.pgm", "x/report.json"):
        assert same(rel), rel
