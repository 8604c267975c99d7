import json

import numpy as np
import pytest

from fingermotion.cli import main, parse_config
from fingermotion.errors import ConfigError
from fingermotion.evaluator import EvalReport

SMALL = """\
# narrow widths so the end-to-end run stays quick
kfe_hidden = 4
enc_hidden = 4
head_widths = 4,4,4,1
decoder_widths = 3,4,4,4,4,4,4,1
epochs = 1
batch_size = 64
stride = 40
val_stride = 40
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def single_error_line(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("error: ")
    return lines[0]


def test_params_default_total(capsys):
    code, out, _ = run(capsys, "params")
    assert code == 0
    counts = json.loads(out)
    assert counts["total"] == 1_469_822 and counts["decoder"] == 36992


def test_params_respects_config(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("use_gcn = false\n")
    _, out, _ = run(capsys, "params", "--config", cfg)
    assert json.loads(out)["total"] == 1_469_822 - 36992


def test_parse_config_types():
    model_kw, train_kw = parse_config("joints = a,b\nedges = a-b\nlr = 0.01\nuse_kfe = no\n")
    assert model_kw == {"joints": ("a", "b"), "edges": (("a", "b"),), "use_kfe": False}
    assert train_kw == {"lr": 0.01}


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("epochs = 2\nflux_capacitor = 1.21\n")
    with pytest.raises(ConfigError, match="flux_capacitor"):
        parse_config(cfg.read_text())
    code, _, err = run(capsys, "params", "--config", cfg)
    assert code == 2
    assert single_error_line(err).startswith("error: config:")


def test_usage_error_is_one_line(capsys):
    with pytest.raises(SystemExit) as e:
        main(["eval", "--ckpt", "x"])
    assert e.value.code == 2
    assert single_error_line(capsys.readouterr().err).startswith("error: usage:")


def test_synth_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run(capsys, "synth", "--out", p, "--seed", 5, "--minutes", 0.2)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    run(capsys, "synth", "--out", b, "--seed", 6, "--minutes", 0.2)
    assert a.read_bytes() != b.read_bytes()


def test_synth_ninety_hertz_layout(tmp_path, capsys):
    p = tmp_path / "r.csv"
    run(capsys, "synth", "--out", p, "--minutes", 0.2, "--rate-hz", 90, "--layout", "reinterhand21")
    lines = p.read_text().splitlines()
    assert lines[0] == "# unit: mm" and len(lines[1].split(",")) == 64


def test_missing_file_is_one_line(tmp_path, capsys):
    code, _, err = run(capsys, "predict", "--ckpt", tmp_path / "nope.ckpt", "--window",
                       tmp_path / "w.csv", "--t-ms", 40)
    assert code == 2
    single_error_line(err)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, cfg, ckpt = root / "data", root / "small.txt", root / "m.ckpt"
    cfg.write_text(SMALL)
    assert main(["synth", "--out", str(data), "--minutes", "1.5", "--recordings", "3"]) == 0
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(ckpt)]) == 0
    return data, ckpt


def test_train_writes_checkpoint_and_log(trained):
    data, ckpt = trained
    assert ckpt.exists()
    log = ckpt.with_suffix(".log.csv").read_text().splitlines()
    assert log[0].startswith("epoch,lr,train_loss,val_mae_t40") and len(log) == 2


def test_eval_twenty_ms_accepted_and_report_written(trained, tmp_path, capsys):
    data, ckpt = trained
    rep = tmp_path / "r.csv"
    code, _, _ = run(capsys, "eval", "--ckpt", ckpt, "--data", data, "--times-ms", "20,40",
                     "--report", rep, "--stride", 20)
    assert code == 0
    r = EvalReport.from_csv(rep)
    assert r.horizons_ms == [20.0, 40.0] and r.predictors == ["model", "zero_velocity"]


def test_eval_twenty_five_ms_rejected(trained, tmp_path, capsys):
    data, ckpt = trained
    code, _, err = run(capsys, "eval", "--ckpt", ckpt, "--data", data, "--times-ms", "25",
                       "--report", tmp_path / "r.csv")
    assert code == 2
    assert single_error_line(err).startswith("error: horizon:")


def test_predict_exports_pose(trained, tmp_path, capsys):
    data, ckpt = trained
    window = sorted((data / "test").glob("*.csv"))[0]
    pose = tmp_path / "pose.csv"
    code, out, _ = run(capsys, "predict", "--ckpt", ckpt, "--window", window, "--t-ms", 120,
                       "--export-pose", pose)
    assert code == 0
    assert len(json.loads(out)["pose"]) == 42
    rows = pose.read_text().splitlines()
    assert rows[2] == "joint,x,y,z,x0,y0,z0" and len(rows) == 3 + 14
    assert np.all(np.isfinite([float(v) for v in rows[3].split(",")[1:]]))


def test_gradcheck_quick_suite_passes(capsys):
    code, out, _ = run(capsys, "gradcheck")
    assert code == 0
    checks = [json.loads(line) for line in out.splitlines()]
    assert all(c["pass"] for c in checks) and len(checks) == 5
