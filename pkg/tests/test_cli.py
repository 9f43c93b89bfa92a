"""End-to-end command-line tests, run in-process via main(argv)."""

import csv
import filecmp
import json
import os

import numpy as np
import pytest

from smoothdiff import load_checkpoint, save_checkpoint
from smoothdiff.cli import main

TINY_CFG = """\
model_latent_dim = 8
model_encoder_width = 16
model_decoder_width = 16
model_decoder_blocks = 2
model_temb_dim = 8
model_latent_width = 16
model_latent_blocks = 2
train_epochs = 3
train_batch_size = 4
train_log_every = 0
shape_n_clouds = 6
shape_n_points = 32
sample_n_steps = 25
sample_n_clouds = 2
sample_n_points = 24
sample_knn_k = 6
eval_knn_k = 4
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One tiny synth + train run shared by the sampling/eval tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    synth = root / "synth"
    train = root / "train"
    assert main(["synth", "--config", str(cfg), "--out", str(synth)]) == 0
    assert main(["train", "--config", str(cfg), "--data", str(synth),
                 "--out", str(train)]) == 0
    return {"root": root, "cfg": str(cfg), "synth": str(synth),
            "train": str(train), "ckpt": str(train / "model.ckpt")}


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ------------------------------------------------------------------ synth


def test_synth_outputs_and_manifest(pipeline):
    synth = pipeline["synth"]
    files = sorted(os.listdir(synth))
    assert [f for f in files if f.endswith(".xyz")] == [
        f"cloud_{i:04d}.xyz" for i in range(6)
    ]
    manifest = json.load(open(os.path.join(synth, "manifest.json")))
    assert manifest["command"] == "synth"
    assert manifest["count"] == 6 and manifest["points"] == 32
    assert len(manifest["config_sha256"]) == 64
    assert set(manifest["versions"]) == {"numpy", "python", "scipy", "smoothdiff"}


def test_synth_deterministic_across_runs(pipeline, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        assert main(["synth", "--config", pipeline["cfg"], "--out", str(out)]) == 0
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b))
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert mismatch == [] and errors == []


def test_synth_flags_override_config(pipeline, tmp_path):
    out = tmp_path / "s"
    assert main([
        "synth", "--config", pipeline["cfg"], "--out", str(out),
        "--kind", "sphere", "--count", "2", "--points", "10", "--seed", "3",
    ]) == 0
    xyz = [f for f in os.listdir(out) if f.endswith(".xyz")]
    assert len(xyz) == 2
    pts = np.loadtxt(out / "cloud_0000.xyz")
    assert pts.shape == (10, 3)
    assert np.allclose(np.linalg.norm(pts, axis=1), 0.5, atol=1e-12)


def test_synth_rejects_bad_count(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "x"), "--count", "0"]) == 2


# ------------------------------------------------------------------ train


def test_train_outputs(pipeline):
    train = pipeline["train"]
    rows = _read_csv(os.path.join(train, "loss.csv"))
    assert rows[0] == ["epoch", "recon", "latent", "entropy", "total"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
    assert os.path.exists(pipeline["ckpt"])
    manifest = json.load(open(os.path.join(train, "manifest.json")))
    assert manifest["epochs"] == 3 and manifest["start_epoch"] == 0
    assert manifest["n_clouds"] == 6


def test_train_deterministic(pipeline, tmp_path):
    t1, t2 = tmp_path / "t1", tmp_path / "t2"
    for out in (t1, t2):
        assert main(["train", "--config", pipeline["cfg"],
                     "--data", pipeline["synth"], "--out", str(out)]) == 0
    assert filecmp.cmp(t1 / "model.ckpt", t2 / "model.ckpt", shallow=False)
    assert filecmp.cmp(t1 / "loss.csv", t2 / "loss.csv", shallow=False)


def test_train_resume_continues_loss_csv(pipeline, tmp_path):
    out = tmp_path / "r"
    assert main(["train", "--config", pipeline["cfg"], "--data", pipeline["synth"],
                 "--out", str(out)]) == 0
    assert main(["train", "--config", pipeline["cfg"], "--data", pipeline["synth"],
                 "--out", str(out), "--resume", str(out / "model.ckpt"),
                 "--epochs", "5"]) == 0
    rows = _read_csv(out / "loss.csv")
    assert [r[0] for r in rows[1:]] == ["0", "1", "2", "3", "4"]
    _, _, header = load_checkpoint(out / "model.ckpt")
    assert header["trained_epochs"] == 5
    # resuming past the target is a config error
    assert main(["train", "--config", pipeline["cfg"], "--data", pipeline["synth"],
                 "--out", str(out), "--resume", str(out / "model.ckpt"),
                 "--epochs", "5"]) == 2


def test_train_requires_data():
    assert main(["train", "--out", "/tmp/unused-train-out"]) == 2


def test_train_missing_data_dir(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nothing"),
                 "--out", str(tmp_path / "o")]) == 3


# ----------------------------------------------------------------- sample


def test_sample_writes_clouds(pipeline, tmp_path):
    out = tmp_path / "s"
    assert main(["sample", "--config", pipeline["cfg"], "--checkpoint",
                 pipeline["ckpt"], "--out", str(out)]) == 0
    xyz = sorted(f for f in os.listdir(out) if f.endswith(".xyz"))
    assert xyz == ["sample_0000.xyz", "sample_0001.xyz"]
    pts = np.loadtxt(out / "sample_0000.xyz")
    assert pts.shape == (24, 3)
    manifest = json.load(open(out / "manifest.json"))
    assert manifest["constraint_mode"] == "off" and manifest["alpha"] == 0.0
    assert manifest["checkpoint_trained_epochs"] == 3


def test_sample_off_switches_equivalent(pipeline, tmp_path):
    """--alpha 0 and --mode off ask for the same unguided chain."""
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["sample", "--config", pipeline["cfg"], "--checkpoint", pipeline["ckpt"]]
    assert main(base + ["--out", str(a), "--alpha", "0"]) == 0
    assert main(base + ["--out", str(b), "--mode", "off"]) == 0
    for name in ("sample_0000.xyz", "sample_0001.xyz"):
        assert filecmp.cmp(a / name, b / name, shallow=False)


def test_sample_deterministic_per_seed(pipeline, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    base = ["sample", "--config", pipeline["cfg"], "--checkpoint", pipeline["ckpt"]]
    assert main(base + ["--out", str(a), "--seed", "5"]) == 0
    assert main(base + ["--out", str(b), "--seed", "5"]) == 0
    assert main(base + ["--out", str(c), "--seed", "6"]) == 0
    assert filecmp.cmp(a / "sample_0000.xyz", b / "sample_0000.xyz", shallow=False)
    assert not filecmp.cmp(a / "sample_0000.xyz", c / "sample_0000.xyz", shallow=False)


def test_sample_alpha_mode_conflict(pipeline, tmp_path, capsys):
    code = main(["sample", "--config", pipeline["cfg"], "--checkpoint",
                 pipeline["ckpt"], "--out", str(tmp_path / "x"),
                 "--alpha", "0.001"])
    assert code == 2
    assert "conflicts" in capsys.readouterr().err


def test_sample_guided_with_trajectories(pipeline, tmp_path):
    out = tmp_path / "g"
    assert main(["sample", "--config", pipeline["cfg"], "--checkpoint",
                 pipeline["ckpt"], "--out", str(out), "--alpha", "1e-4",
                 "--mode", "frozen", "--knn-k", "4", "--steps", "15",
                 "--record-trajectory"]) == 0
    rows = _read_csv(out / "trajectory_0000.csv")
    assert rows[0] == ["step", "t", "smoothness"]
    assert len(rows) == 17  # header + 15 steps + final row
    ts = [float(r[1]) for r in rows[1:]]
    assert all(x > y for x, y in zip(ts, ts[1:]))


def test_sample_t_constraint_window(pipeline, tmp_path):
    guided = ["sample", "--config", pipeline["cfg"], "--checkpoint",
              pipeline["ckpt"], "--alpha", "1e-3", "--mode", "frozen",
              "--knn-k", "4", "--steps", "12"]
    never, off, late = (tmp_path / n for n in ("never", "off", "late"))
    # window below the chain floor: guidance can never fire
    assert main(guided + ["--out", str(never), "--t-constraint", "1e-6"]) == 0
    assert main(["sample", "--config", pipeline["cfg"], "--checkpoint",
                 pipeline["ckpt"], "--mode", "off", "--steps", "12",
                 "--out", str(off)]) == 0
    assert main(guided + ["--out", str(late), "--t-constraint", "0.5"]) == 0
    read = lambda d: (d / "sample_0000.xyz").read_bytes()
    assert read(never) == read(off)
    assert read(late) != read(off)
    assert main(guided + ["--out", str(tmp_path / "bad"),
                          "--t-constraint", "0"]) == 2


def test_sample_missing_checkpoint(pipeline, tmp_path):
    assert main(["sample", "--checkpoint", str(tmp_path / "no.ckpt"),
                 "--out", str(tmp_path / "o")]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_sample_numerical_abort_exit_code(pipeline, tmp_path):
    bundle, schedule, _ = load_checkpoint(pipeline["ckpt"])
    bundle.decoder.params[:] = 1e308
    bad = tmp_path / "bad.ckpt"
    save_checkpoint(bad, bundle, schedule, trained_epochs=3)
    assert main(["sample", "--config", pipeline["cfg"], "--checkpoint", str(bad),
                 "--out", str(tmp_path / "o"), "--steps", "5"]) == 4


# ------------------------------------------------------------------- eval


def test_eval_identical_sets(pipeline, tmp_path, capsys):
    out = tmp_path / "metrics.csv"
    assert main(["eval", "--config", pipeline["cfg"],
                 "--reference", pipeline["synth"],
                 "--generated", pipeline["synth"], "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    values = dict(
        line.split("=", 1) for line in stdout.splitlines() if "=" in line and ":" not in line
    )
    assert float(values["mmd"]) == 0.0
    assert float(values["cov"]) == 1.0
    assert float(values["rs"]) == 0.0
    rows = _read_csv(out)
    assert rows[0] == ["metric", "value"]
    table = {r[0]: float(r[1]) for r in rows[1:]}
    assert table["mmd"] == 0.0 and table["cov"] == 1.0 and table["one_nna"] == 0.0


def test_eval_distinct_sets(pipeline, tmp_path):
    gen = tmp_path / "gen"
    assert main(["sample", "--config", pipeline["cfg"], "--checkpoint",
                 pipeline["ckpt"], "--out", str(gen), "--points", "32"]) == 0
    out = tmp_path / "m.csv"
    assert main(["eval", "--config", pipeline["cfg"], "--reference",
                 pipeline["synth"], "--generated", str(gen),
                 "--out", str(out)]) == 0
    table = {r[0]: float(r[1]) for r in _read_csv(out)[1:]}
    assert table["mmd"] > 0.0
    assert table["mmd_x100"] == pytest.approx(100.0 * table["mmd"], rel=1e-15)
    assert 0.0 <= table["cov"] <= 1.0 and 0.0 <= table["one_nna"] <= 1.0


def test_eval_missing_directory(pipeline, tmp_path):
    assert main(["eval", "--reference", str(tmp_path / "none"),
                 "--generated", pipeline["synth"],
                 "--out", str(tmp_path / "m.csv")]) == 3


# ---------------------------------------------------------------- sweep-k


def test_sweep_k_csv(pipeline, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep-k", "--config", pipeline["cfg"],
                 "--checkpoint", pipeline["ckpt"],
                 "--reference", pipeline["synth"], "--out", str(out),
                 "--k-values", "3,5", "--eval-k", "4", "--count", "2",
                 "--points", "20", "--steps", "10", "--alpha", "1e-4",
                 "--t-constraint", "0.5"]) == 0
    rows = _read_csv(out)
    assert rows[0] == ["k", "mean_smoothness", "rs", "baseline_smoothness"]
    assert [r[0] for r in rows[1:]] == ["3", "5"]
    baselines = {r[3] for r in rows[1:]}
    assert len(baselines) == 1
    for r in rows[1:]:
        assert float(r[1]) >= 0.0 and float(r[2]) >= 0.0


def test_sweep_k_validation(pipeline, tmp_path):
    base = ["sweep-k", "--config", pipeline["cfg"], "--checkpoint",
            pipeline["ckpt"], "--reference", pipeline["synth"],
            "--out", str(tmp_path / "s.csv")]
    assert main(base + ["--k-values", "30", "--points", "20",
                        "--steps", "5", "--count", "1"]) == 2
    assert main(base + ["--k-values", "abc"]) == 2
    assert main(base + ["--k-values", "3", "--alpha", "0",
                        "--points", "20", "--steps", "5"]) == 2


# ------------------------------------------------------------------- misc


def test_denoise_demo_reports_small_errors(capsys):
    assert main(["denoise-demo", "--samples", "400", "--steps", "60",
                 "--seed", "1"]) == 0
    out = capsys.readouterr().out
    values = dict(line.split("=", 1) for line in out.strip().splitlines())
    assert float(values["tweedie_vs_posterior_max_abs_error"]) < 1e-9
    assert float(values["gmm_score_vs_finite_difference_max_rel_error"]) < 1e-5
    assert float(values["mixture_occupancy_abs_error"]) < 0.1
    assert float(values["mixture_component_mean_error"]) < 0.2


def test_unknown_command_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_config_output_dir_used(pipeline, tmp_path):
    cfg = tmp_path / "o.cfg"
    cfg.write_text(TINY_CFG + f"output_dir = {tmp_path / 'routed'}\n")
    assert main(["synth", "--config", str(cfg), "--count", "1"]) == 0
    assert os.path.exists(tmp_path / "routed" / "synth" / "cloud_0000.xyz")


def test_bad_config_file_exits_two(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("not_a_key = 1\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 2
