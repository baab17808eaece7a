import json

import pytest

from mmgat.cli import main

SUBCOMMANDS = ["synth", "preprocess", "train", "eval", "gradcheck", "inspect"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    assert "--" in capsys.readouterr().out


def test_unknown_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--out", "x", "--bogus"])
    assert exc.value.code == 1


def test_synth_shape_and_determinism(tmp_path, capsys):
    for name in ("a", "b"):
        code, _, _ = run(capsys, "synth", "--frames", "10", "--points", "24", "--joints", "17",
                         "--seed", "7", "--out", str(tmp_path / name))
        assert code == 0
    pts = (tmp_path / "a" / "points.csv").read_text().splitlines()
    labels = (tmp_path / "a" / "labels.csv").read_text().splitlines()
    assert len(pts) == 241 and len(labels) == 11
    for f in ("points.csv", "labels.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_zero_frames(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--frames", "0", "--out", str(tmp_path)])
    assert exc.value.code == 1


def test_synth_unwritable(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(capsys, "synth", "--frames", "2", "--out", str(blocker / "sub"))
    assert code == 2 and err


@pytest.fixture
def data(tmp_path, capsys):
    run(capsys, "synth", "--frames", "6", "--points", "10", "--seed", "1", "--out", str(tmp_path))
    return tmp_path / "points.csv"


def test_preprocess_identity(data, tmp_path, capsys):
    out = tmp_path / "out" / "points.csv"
    code, text, _ = run(capsys, "preprocess", "--in", str(data), "--out", str(out), "--sort")
    assert code == 0 and "frames=6 removed=0" in text
    assert out.read_bytes() == data.read_bytes()
    assert (out.parent / "labels.csv").read_bytes() == (data.parent / "labels.csv").read_bytes()


def test_preprocess_planted_frame(data, tmp_path, capsys):
    labels = data.parent / "labels.csv"
    lines = labels.read_text().splitlines()
    row = lines[3].split(",")
    row[5] = "7.5"
    lines[3] = ",".join(row)
    labels.write_text("\n".join(lines) + "\n")
    code, text, _ = run(capsys, "preprocess", "--in", str(data), "--out",
                        str(tmp_path / "clean.csv"), "--denoise-bound", "5", "--fuse-window", "3")
    assert code == 0
    assert "removed_ids=2" in text.splitlines()


def test_preprocess_even_window(data, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["preprocess", "--in", str(data), "--out", str(tmp_path / "o.csv"),
              "--fuse-window", "2"])
    assert exc.value.code == 1


def test_preprocess_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("frame_id,x,y,z,v,intensity\n0,1,2,3\n")
    code, _, err = run(capsys, "preprocess", "--in", str(bad), "--out", str(tmp_path / "o.csv"))
    assert code == 2 and "line 2" in err


def test_missing_input(tmp_path, capsys):
    code, _, _ = run(capsys, "preprocess", "--in", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "o.csv"))
    assert code == 2


@pytest.fixture
def trained(data, tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("\n".join([
        "batch_size = 6", "epochs = 400", "base_lr = 0.003", "lr_factor = 1.0",
        "k_neighbors = 4", "loss = mpjpe", "seed = 0", "joint_count = 17",
        "edge_widths = [16, 16, 16]", "gat_layers = 2", "gat_width = 32",
        "head_widths = [64, 64]", "dropout_rate = 0.0"]) + "\n")
    ckpt = tmp_path / "model.json"
    code, text, _ = run(capsys, "train", "--config", str(cfg), "--data", str(data),
                        "--checkpoint", str(ckpt), "--log", str(tmp_path / "log.jsonl"))
    assert code == 0
    assert len((tmp_path / "log.jsonl").read_text().splitlines()) == 400
    return ckpt


def test_eval_overfit_checkpoint(trained, data, capsys):
    code, text, _ = run(capsys, "eval", "--checkpoint", str(trained), "--data", str(data))
    assert code == 0
    fields = dict(line.split("=") for line in text.splitlines())
    assert float(fields["mpjpe"]) < 1.0
    assert float(fields["pa_mpjpe"]) <= float(fields["mpjpe"]) + 1e-6


def test_eval_mars_fields(trained, data, capsys):
    code, text, _ = run(capsys, "eval", "--checkpoint", str(trained), "--data", str(data),
                        "--protocol", "mars")
    keys = {line.split("=")[0] for line in text.splitlines()}
    assert code == 0
    assert {"mae_x", "mae_avg", "rmse_z", "rmse_avg"} <= keys
    assert not keys & {"mpjpe", "pa_mpjpe"}


def test_inspect(trained, capsys):
    code, text, _ = run(capsys, "inspect", "--checkpoint", str(trained))
    assert code == 0
    assert "gat.1.attention [96]" in text
    config = json.loads(next(l for l in text.splitlines() if l.startswith("config="))[7:])
    assert config["model"]["gat_width"] == 32


def test_corrupt_checkpoint(tmp_path, data, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "mmgat-checkpoint", "epoch": ')
    code, _, err = run(capsys, "eval", "--checkpoint", str(bad), "--data", str(data))
    assert code == 2 and "line 1" in err


def test_resume_via_cli(trained, data, tmp_path, capsys):
    cfg = tmp_path / "more.json"
    doc = json.loads(next(l for l in run(capsys, "inspect", "--checkpoint", str(trained))[1]
                          .splitlines() if l.startswith("config="))[7:])
    doc["epochs"] = 401
    doc["checkpoint_path"] = None
    doc["log_path"] = None
    cfg.write_text(json.dumps(doc))
    code, text, _ = run(capsys, "train", "--config", str(cfg), "--data", str(data),
                        "--resume", str(trained))
    assert code == 0 and '"epoch": 400' in text


def test_gradcheck(capsys):
    code, text, _ = run(capsys, "gradcheck", "--seed", "0")
    assert code == 0 and "PASS" in text
