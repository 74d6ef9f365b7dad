import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpcdagger.config import ExperimentConfig, EvalSection, SweepAxis
from mpcdagger.evaluation import (Metrics, SweepResult, SweepRow, compute_metrics, emit_report,
                                  evaluate, grid_points, parse_table, run_sweep, table_text)
from mpcdagger.envs import make_task
from mpcdagger.policies import FNNPolicy

costs = st.one_of(st.floats(0, 300, allow_nan=False), st.just(float("inf")), st.just(float("nan")))


def test_metrics_examples():
    assert compute_metrics([50.0, 150.0]) == Metrics(2, 1, 50.0, 0.0)
    m = compute_metrics([200.0, float("inf")])
    assert m.successes == 0 and m.mean_cost is None and m.std_cost is None and m.success_pct == 0
    assert compute_metrics([7.0] * 4) == Metrics(4, 4, 7.0, 0.0)
    assert compute_metrics([(np.zeros((3, 4)), 100.0)]).successes == 1


def test_metrics_need_a_trial():
    with pytest.raises(ValueError):
        compute_metrics([])


@given(st.lists(costs, min_size=1, max_size=50))
def test_metrics_invariants(cs):
    m = compute_metrics(cs)
    ok = [c for c in cs if c <= 100]
    assert m.trials == len(cs) and m.successes == len(ok) <= m.trials
    if ok:
        assert np.isclose(m.mean_cost, np.mean(ok)) and np.isclose(m.std_cost, np.std(ok))
        assert min(ok) - 1e-9 <= m.mean_cost <= max(ok) + 1e-9
    else:
        assert m.mean_cost is None


class ZeroPolicy(FNNPolicy):
    def act(self, obs, state=None):
        return np.zeros((len(obs), 1)), None


def small_config(tmp_path, **kw):
    base = dict(task="cartpole", policy="fnn", output_dir=str(tmp_path),
                eval=EvalSection(trials=6, steps=20, seed=5),
                sweep=[SweepAxis("pole_length", [0.5, 0.7]), SweepAxis("cart_mass", [1.2])])
    base.update(kw)
    return ExperimentConfig(**base)


def test_zero_controls_never_swing_up():
    task = make_task("cartpole")
    zero = ZeroPolicy(task.obs_dim, 1, hidden=2)
    m = evaluate(zero, task, 32, task.test_steps, seed=0)
    assert m.successes == 0


def test_grid_points_dedupe_baseline(tmp_path):
    cfg = small_config(tmp_path)
    labels = [p[0] for p in grid_points(cfg)]
    assert labels == ["baseline", "pole_length=0.7", "cart_mass=1.2"]


def test_run_sweep_is_deterministic(tmp_path):
    cfg = small_config(tmp_path)
    pol = FNNPolicy(5, 1, hidden=4, control_scale=[10.0], rng=np.random.default_rng(0))
    a = run_sweep(cfg, pol)
    b = run_sweep(cfg, pol, threads=2)
    assert a.rows == b.rows
    assert [r.params for r in a.rows] == ["baseline", "pole_length=0.7", "cart_mass=1.2"]
    assert all(r.metrics.trials == 6 for r in a.rows)


def test_run_sweep_missing_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError):
        run_sweep(small_config(tmp_path), tmp_path / "nope.ckpt")


def result():
    rows = [SweepRow("cartpole", "baseline", "mpc-rnn", Metrics(128, 118, 3.141592653589793, 1 / 3)),
            SweepRow("cartpole", "pole_length=0.7", "mpc-rnn", Metrics(128, 0, None, None))]
    return SweepResult(rows, {"task": "cartpole"}, {"eval_seed": 1})


def test_table_has_one_line_per_row():
    text = table_text(result())
    lines = text.splitlines()
    assert lines[0] == "task,params,policy,trials,successes,success_pct,mean_cost,std_cost"
    assert len(lines) == 3 and lines[2].endswith(",0.0,,")


def test_report_round_trip_and_byte_identity(tmp_path):
    r = result()
    c1, j1 = emit_report(r, tmp_path / "a")
    c2, j2 = emit_report(r, tmp_path / "b")
    assert c1.read_bytes() == c2.read_bytes() and j1.read_bytes() == j2.read_bytes()
    assert parse_table(c1.read_text()) == r.rows


@given(st.lists(st.tuples(st.integers(1, 200), st.floats(0, 100, allow_nan=False),
                          st.floats(0, 50, allow_nan=False)), min_size=1, max_size=5))
def test_report_round_trip_property(vals):
    rows = [SweepRow("quad-fig8", f"mass={i}", "fnn", Metrics(n, n // 2, m if n // 2 else None,
                                                              s if n // 2 else None))
            for i, (n, m, s) in enumerate(vals)]
    assert parse_table(table_text(SweepResult(rows))) == rows


def test_parse_rejects_foreign_header():
    with pytest.raises(ValueError):
        parse_table("a,b\n1,2\n")


def test_unwritable_output_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(result(), blocker / "sub")
