import pytest

from mpcdagger.config import ExperimentConfig, default_grid, from_dict, load_config
from mpcdagger.pinet import ConfigError


def write(tmp_path, text):
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return p


def test_full_file_loads(tmp_path):
    cfg = load_config(write(tmp_path, """
task = "cartpole"
policy = "mpc-rnn"
seed = 3
output_dir = "out"

[env]
pole_length = 0.6

[mppi]
K = 50

[dagger]
iterations = 2
episodes = 4
epochs = 5

[eval]
trials = 8

[[sweep]]
param = "pole_length"
values = [0.5, 0.7]
"""))
    assert cfg.seed == 3 and cfg.mppi.K == 50 and cfg.dagger.epochs == 5
    assert cfg.build_task().params.pole_length == 0.6
    assert cfg.build_expert().cfg.K == 50
    assert cfg.build_policy().kind == "mpc-rnn"
    assert cfg.sweep[0].values == [0.5, 0.7]


@pytest.mark.parametrize("text", [
    'tsk = "cartpole"',
    '[dagger]\niteratons = 3',
    '[env]\nwingspan = 2.0',
    '[[sweep]]\nparam = "wingspan"\nvalues = [1.0]',
    '[[sweep]]\nparam = "mass"\nvalues = [1.0]',          # quad parameter on cartpole
    '[[sweep]]\nparam = "pole_length"\nvalues = [1.0]\nstep = 2',
    'task = "pendulum"',
    'policy = "lstm"',
    '[dagger]\nbetas = [1.0, 1.5]',
])
def test_invalid_files_are_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text))


def test_syntax_error_reported(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "task = "))


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/cfg.toml")


def test_pinet_memory_budget_enforced():
    with pytest.raises(ConfigError):
        from_dict({"policy": "pinet", "pinet": {"U": 200}})
    from_dict({"policy": "pinet", "pinet": {"U": 1}})


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.eval.trials == 128 and cfg.dagger.episodes == 64
    assert len(cfg.schedule()) == 23 and cfg.epochs() == 500
    assert from_dict({"policy": "pinet"}).epochs() == 100
    assert from_dict({"dagger": {"expert_only": True}}).schedule()[7] == 1.0


def test_default_grids_cover_the_perturbations():
    cart = {a.param: a.values for a in default_grid("cartpole")}
    assert cart["pole_length"][0] == 0.3 and cart["pole_length"][-1] == 0.8
    assert len(cart["pole_length"]) == 11 and 0.7 in cart["pole_length"]
    assert 1.2 in cart["cart_mass"]
    quad = {a.param: a.values for a in default_grid("quad-circle")}
    assert quad["noise_std"] == [0.1, 1.0] and quad["init_offset"] == [0.0, 0.5]
    assert quad["arm_length"] == [0.35, 0.175]
    assert 1.0 in quad["mass"] and 1.5 in quad["mass"] and len(quad["mass"]) == 12


def test_digest_is_stable_and_sensitive():
    a, b = ExperimentConfig(seed=1), ExperimentConfig(seed=1)
    assert a.digest() == b.digest() != ExperimentConfig(seed=2).digest()


def test_shipped_configs_load():
    from pathlib import Path
    files = sorted((Path(__file__).parent.parent / "configs").glob("*.toml"))
    assert files
    for f in files:
        cfg = load_config(f)
        cfg.build_task()
