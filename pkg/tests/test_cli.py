import json

import pytest

from lrem.cli import main
from lrem.config import RunConfig


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """Small config plus a tiny dataset and models shared by the tests below."""
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "fast.json"
    cfg.write_text(json.dumps({"dispersion.points_per_segment": 2, "dispersion.n_bands": 8,
                               "verify.plate_cells": [2, 2], "inn.blocks": 2, "inn.subnet_hidden_layers": 1,
                               "inn.subnet_width": 8, "dnn.hidden_layers": 1, "dnn.width": 8,
                               "train.batch_size": 4}))
    data = d / "data.csv"
    assert main(["--config", str(cfg), "sample-data", "--n", "12", "--seed", "3",
                 "--out", str(data)]) == 0
    for kind in ("inn", "dnn"):
        assert main(["--config", str(cfg), "train", "--data", str(data), "--model", kind,
                     "--epochs", "3", "--out", str(d / f"{kind}.json")]) == 0
    return d, cfg


def run(work, *args):
    d, cfg = work
    return main(["--config", str(cfg), *args])


def test_sample_data_outputs_and_determinism(work, tmp_path):
    d, _ = work
    again = tmp_path / "again.csv"
    assert run(work, "sample-data", "--n", "12", "--seed", "3", "--out", str(again)) == 0
    assert again.read_text() == (d / "data.csv").read_text()
    meta = json.loads((d / "data.csv.meta.json").read_text())
    assert meta["n_samples"] == 12
    assert meta["config_hash"] == RunConfig.load(work[1]).override(data_seed=3).hash


def test_train_writes_model_loss_and_figure(work):
    d, _ = work
    for kind in ("inn", "dnn"):
        assert (d / f"{kind}.json").exists()
        assert (d / f"{kind}-loss.csv").read_text().startswith("epoch,")
        assert (d / f"{kind}-loss.svg").read_text().lstrip().startswith("<?xml")


def test_retrieve_prints_design_and_gap(work, capsys):
    d, _ = work
    assert run(work, "retrieve", "--inn", str(d / "inn.json"), "--gap", "1000:1700") == 0
    record = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert record["query_hz"] == [1000.0, 1700.0]
    assert set(record["design_mm"]) == {"x_m", "y_m", "x_f", "y_f"}
    assert "bda_gap_hz" in record


def test_retrieve_rejects_dnn_model(work):
    d, _ = work
    assert run(work, "retrieve", "--inn", str(d / "dnn.json"), "--gap", "1000:1700") == 2


@pytest.mark.parametrize("init", ["inn", "random"])
def test_optimize_writes_logs_summary_and_plot(work, tmp_path, capsys, init):
    d, _ = work
    out = tmp_path / "opt"
    args = ["optimize", "--gap", "800:1050", "--init", init, "--inn", str(d / "inn.json"),
            "--evaluator", "dnn", "--dnn", str(d / "dnn.json"), "--budget", "12",
            "--trials", "2", "--out", str(out)]
    assert run(work, "--threads", "1", *args) == 0
    summary = json.loads((out / "summary.json").read_text())
    row = summary["rows"][0]
    assert row["query"] == "800-1050 Hz" and row["evaluator"] == "DNN"
    assert len(summary["run_logs"]) == (1 if init == "inn" else 2)
    assert (out / "convergence.svg").exists()
    assert "Violation" in capsys.readouterr().out


def test_dispersion_csv_svg_and_meta(work, tmp_path, capsys):
    out = tmp_path / "bands.csv"
    assert run(work, "dispersion", "--design", "2,2,2,2", "--out", str(out)) == 0
    assert out.read_text().splitlines()[0].startswith("k_index,kx,ky,band_1")
    assert (tmp_path / "bands.svg").exists()
    assert json.loads((tmp_path / "bands.csv.meta.json").read_text())["command"] == "dispersion"
    assert "gap" in capsys.readouterr().out


def test_verify_outputs(work, tmp_path):
    out = tmp_path / "ver"
    assert run(work, "verify", "--design", "2,2,2,2", "--gap", "1000:1300", "--step", "200",
               "--out", str(out)) == 0
    lines = (out / "transmissibility.csv").read_text().splitlines()
    assert lines[0] == "freq_hz,tr_m_per_N,tr_db" and len(lines) == 11
    assert (out / "transmissibility.svg").exists()


def test_no_plots_flag(work, tmp_path):
    out = tmp_path / "b.csv"
    assert run(work, "dispersion", "--design", "2,2,2,2", "--out", str(out), "--no-plots") == 0
    assert not (tmp_path / "b.svg").exists()


@pytest.mark.parametrize("args", [
    ["sample-data", "--n", "0"],
    ["dispersion", "--design", "2,2,2"],
    ["train", "--data", "d.csv", "--model", "xyz", "--out", "m.json"],
    ["dispersion", "--design", "9,2,2,2"],
    ["retrieve", "--inn", "x.json", "--gap", "1700:1000"],
    ["optimize", "--gap", "800:1050", "--init", "inn"],
    ["--threads", "0", "dispersion", "--design", "2,2,2,2"],
])
def test_usage_errors_exit_2(work, args):
    try:
        code = run(work, *args)
    except SystemExit as exc:  # argparse rejects before dispatch
        code = exc.code
    assert code == 2


def test_unknown_config_key_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"optimize.budgett": 3}))
    assert main(["--config", str(bad), "dispersion", "--design", "2,2,2,2"]) == 2


def test_inn_training_keys_leave_dnn_alone():
    cfg = RunConfig.from_flat({"inn.bidirectional_loss": True, "inn.epochs": 7, "train.epochs": 9})
    inn, dnn = cfg.train_config("inn"), cfg.train_config("dnn")
    assert (inn.bidirectional, inn.epochs) == (True, 7)
    assert (dnn.bidirectional, dnn.epochs) == (False, 9)
    default = RunConfig().train_config("inn")
    assert (default.bidirectional, default.epochs) == (False, 2000)


def test_missing_files_exit_4(work, tmp_path):
    assert run(work, "train", "--data", str(tmp_path / "nope.csv"), "--model", "dnn",
               "--out", str(tmp_path / "m.json")) == 4
    assert run(work, "retrieve", "--inn", str(tmp_path / "nope.json"), "--gap", "1000:1700") == 4
