import json

import pytest

from mpcdagger.checkpoint import load_checkpoint
from mpcdagger.cli import main
from mpcdagger.dagger import Dataset

CONFIG = """
task = "cartpole"
policy = "{policy}"
seed = 7
output_dir = "{out}"

[mppi]
K = 8
H = 5

[pinet]
hidden = 8
K = 4

[dagger]
iterations = 2
episodes = 2
steps = 10
epochs = 2
validation_episodes = 2

[eval]
trials = 4
steps = 20

[[sweep]]
param = "pole_length"
values = [0.5, 0.7]
"""


def make_config(tmp_path, policy="mpc-rnn"):
    out = tmp_path / "run"
    path = tmp_path / "cfg.toml"
    path.write_text(CONFIG.format(policy=policy, out=out))
    return path, out


@pytest.mark.parametrize("policy", ["fnn", "mpc-rnn", "pinet"])
def test_train_writes_artifacts(tmp_path, policy):
    cfg, out = make_config(tmp_path, policy)
    assert main(["train", "--config", str(cfg)]) == 0
    assert (out / "checkpoints" / "iter_01.ckpt").exists()
    assert load_checkpoint(out / "best.ckpt").kind == policy
    assert len(Dataset.load(out / "dataset.jsonl")) == 2 * 2 * 10
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["seed"] == 7 and len(manifest["config_sha256"]) == 64


def test_train_and_sweep_reproducible(tmp_path, capsys):
    cfg, out = make_config(tmp_path)
    main(["train", "--config", str(cfg), "--output-dir", str(tmp_path / "a")])
    main(["train", "--config", str(cfg), "--output-dir", str(tmp_path / "b")])
    for name in ("best.ckpt", "dataset.jsonl", "losses.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ck = str(tmp_path / "a" / "best.ckpt")
    reports = []
    for d in ("s1", "s2"):
        assert main(["sweep", "--config", str(cfg), "--checkpoint", ck,
                     "--output-dir", str(tmp_path / d)]) == 0
        reports.append(((tmp_path / d / "sweep.csv").read_bytes(),
                        (tmp_path / d / "sweep.json").read_bytes()))
    assert reports[0] == reports[1]
    lines = reports[0][0].decode().splitlines()
    assert len(lines) == 3 and lines[2].split(",")[1] == "pole_length=0.7"


def test_eval_and_expert_demo(tmp_path, capsys):
    cfg, out = make_config(tmp_path)
    assert main(["eval", "--config", str(cfg), "--checkpoint", "expert"]) == 0
    assert (out / "eval.csv").exists()
    assert main(["expert-demo", "--config", str(cfg), "--episodes", "2"]) == 0
    assert "expert" in capsys.readouterr().out


def test_missing_checkpoint_is_an_error(tmp_path, capsys):
    cfg, _ = make_config(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--checkpoint", str(tmp_path / "x.ckpt")]) == 2
    assert "checkpoint not found" in capsys.readouterr().err


def test_bad_config_is_an_error(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("colour = 3\n")
    assert main(["expert-demo", "--config", str(path)]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_grad_check_command(capsys):
    assert main(["grad-check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "pinet end-to-end" in out
