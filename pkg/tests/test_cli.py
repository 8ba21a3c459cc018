"""Command-line interface tests exercising every subcommand and exit code."""

import json

import pytest

from logitbench.cli import build_parser, main


def write_config(tmp_path, **overrides):
    raw = {
        "data": {"kind": "blobs", "k": 3, "d": 4, "n_train_per_class": 40,
                 "n_test_per_class": 10, "cluster_spread": 0.5,
                 "cluster_radius": 3.0, "val_fraction": 0.2},
        "layer_dims": [4, 8, 3],
        "losses": [{"kind": "cross_entropy"}],
        "optim": {"lr0": 0.05, "momentum": 0.9, "weight_decay": 1e-4,
                  "epochs": 3, "batch_size": 32, "lr_drops": []},
        "scores": [{"kind": "msp"}],
        "ood_panel": [{"kind": "uniform_box", "m": 40, "params": {"half_width": 1.0}}],
        "validation_ood": {"kind": "gaussian_noise", "m": 40, "params": {"std": 0.5}},
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
    }
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_train_then_score_then_eval(tmp_path, capsys):
    cfg_path = write_config(tmp_path)
    out = tmp_path / "out"

    assert main(["train", "--config", str(cfg_path), "--quiet"]) == 0
    ckpt = out / "checkpoint_cross_entropy_0.txt"
    assert ckpt.exists()
    assert (out / "telemetry_cross_entropy_0.csv").exists()

    assert main(["score", "--config", str(cfg_path), "--quiet",
                 "--checkpoint", str(ckpt)]) == 0
    dump = out / "scores_msp_uniform_box_0.txt"
    assert dump.exists()

    assert main(["eval", "--scores", str(dump)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("name,fpr_at_95_tpr,auroc,aupr,n_id,n_ood")


def test_bench_subcommand(tmp_path):
    cfg_path = write_config(tmp_path)
    assert main(["bench", "--config", str(cfg_path), "--quiet"]) == 0
    assert (tmp_path / "out" / "bench.csv").exists()


def test_bench_out_override(tmp_path):
    cfg_path = write_config(tmp_path)
    alt = tmp_path / "elsewhere"
    assert main(["bench", "--config", str(cfg_path), "--quiet",
                 "--out", str(alt)]) == 0
    assert (alt / "bench.csv").exists()


def test_seed_override_limits_artifacts(tmp_path):
    cfg_path = write_config(tmp_path, seeds=[0, 1])
    assert main(["train", "--config", str(cfg_path), "--quiet",
                 "--seed", "1"]) == 0
    out = tmp_path / "out"
    assert (out / "checkpoint_cross_entropy_1.txt").exists()
    assert not (out / "checkpoint_cross_entropy_0.txt").exists()


def test_sweep_tau_subcommand(tmp_path):
    cfg_path = write_config(tmp_path)
    assert main(["sweep-tau", "--config", str(cfg_path), "--quiet",
                 "--tau-grid", "0.04,0.1"]) == 0
    assert (tmp_path / "out" / "sweep_tau.csv").exists()


def test_calibrate_subcommand(tmp_path):
    cfg_path = write_config(tmp_path)
    assert main(["calibrate", "--config", str(cfg_path), "--quiet"]) == 0
    assert (tmp_path / "out" / "calibration.csv").exists()


def test_report_subcommand(tmp_path):
    cfg_path = write_config(tmp_path)
    main(["bench", "--config", str(cfg_path), "--quiet"])
    dump = tmp_path / "out" / "scores_cross_entropy_msp_uniform_box_0.txt"
    hist = tmp_path / "hist.csv"
    assert main(["report", "--scores", str(dump), "--bins", "8",
                 "--out", str(hist)]) == 0
    lines = hist.read_text().strip().split("\n")
    assert lines[0] == "bin_left,bin_right,id_count,ood_count"
    assert len(lines) == 9


# ---------------------------------------------------------------------------
# exit codes


def test_exit_code_config_error(tmp_path):
    cfg_path = write_config(tmp_path)
    raw = json.loads(cfg_path.read_text())
    raw["unknown_knob"] = 1
    cfg_path.write_text(json.dumps(raw))
    assert main(["bench", "--config", str(cfg_path), "--quiet"]) == 1


def test_exit_code_data_error(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert main(["eval", "--scores", str(empty)]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_code_all_diverged(tmp_path):
    cfg_path = write_config(
        tmp_path,
        optim={"lr0": 1e9, "momentum": 0.9, "weight_decay": 0.1,
               "epochs": 20, "batch_size": 32, "lr_drops": []})
    assert main(["bench", "--config", str(cfg_path), "--quiet"]) == 3


def test_eval_writes_file(tmp_path):
    scores = tmp_path / "s.txt"
    scores.write_text("ID,0.9\nID,0.8\nOOD,0.1\n")
    out = tmp_path / "metrics.csv"
    assert main(["eval", "--scores", str(scores), "--out", str(out)]) == 0
    assert out.read_text().startswith("name,")
