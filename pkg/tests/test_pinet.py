import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpcdagger import autodiff as ad
from mpcdagger.envs import make_task
from mpcdagger.mppi import control_update
from mpcdagger.pinet import (ConfigError, PiNet, cost_trajectories, init_hidden, pinet_forward,
                             pinet_grad_check, pinet_loss, sample_abstract_rollouts)

TASK = make_task("cartpole")


def tiny(**kw):
    kw = dict(dict(hidden=8, horizon=3, K=4), **kw)
    return PiNet.for_task(TASK, rng=np.random.default_rng(0), **kw)


def fixed_inputs(net, B=2, seed=1):
    rng = np.random.default_rng(seed)
    obs = rng.normal(size=(B, TASK.obs_dim))
    warm = rng.normal(size=(B, net.horizon, 1))
    target = rng.normal(size=(B, net.horizon, 1))
    noise = net.sigma * np.sqrt(net.dt) * rng.normal(size=(net.U, B, net.K, net.horizon, 1))
    return obs, warm, target, noise


def test_init_hidden_zero_pads():
    h = init_hidden(ad.Tensor(np.array([[1.0, 2.0]])), hidden=4)
    np.testing.assert_array_equal(h.numpy(), [[1, 2, 0, 0]])


def test_init_hidden_rejects_narrow_width():
    with pytest.raises(ConfigError):
        init_hidden(ad.Tensor(np.ones(5)), hidden=4)
    with pytest.raises(ConfigError):
        PiNet(obs_dim=9, control_dim=1, hidden=8)


def test_abstract_rollout_shapes():
    net = tiny()
    P = net.tensors()
    obs, warm, _, noise = fixed_inputs(net)
    h0 = init_hidden(ad.Tensor(obs), net.hidden)
    states, controls = sample_abstract_rollouts(P, h0, ad.Tensor(warm), ad.Tensor(noise[0]), net.dt)
    assert len(states) == len(controls) == net.horizon
    assert states[0].shape == (2, net.K, net.hidden)
    assert controls[0].shape == (2, net.K, 1)
    np.testing.assert_allclose(controls[1].numpy(), warm[:, None, 1] + noise[0][:, :, 1] / np.sqrt(net.dt))
    assert cost_trajectories(P, states, controls).shape == (2, net.K)


def test_forward_is_the_shared_update_of_learned_costs():
    net = tiny()
    P = net.tensors()
    obs, warm, _, noise = fixed_inputs(net)
    h0 = init_hidden(ad.Tensor(obs), net.hidden)
    states, controls = sample_abstract_rollouts(P, h0, ad.Tensor(warm), ad.Tensor(noise[0]), net.dt)
    costs = cost_trajectories(P, states, controls)
    expected, _ = control_update(warm, noise[0], costs, net.lam, net.dt)
    out = pinet_forward(net, P, ad.Tensor(obs), ad.Tensor(warm), noise)
    np.testing.assert_array_equal(out.numpy(), expected.numpy())


def test_end_to_end_gradient():
    net = tiny()
    assert pinet_grad_check(net, *fixed_inputs(net)) < 1e-4


def test_gradient_with_two_planning_iterations():
    net = tiny(U=2)
    assert pinet_grad_check(net, *fixed_inputs(net)) < 1e-4


def test_loss_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        pinet_loss(ad.Tensor(np.zeros((2, 3, 1))), np.zeros((2, 4, 1)))


def test_plan_uses_generators_and_is_reproducible():
    net = tiny()
    obs = np.ones((2, TASK.obs_dim))
    warm = np.zeros((2, 3, 1))
    a = net.plan(obs, warm, [np.random.default_rng(1), np.random.default_rng(2)])
    b = net.plan(obs, warm, [np.random.default_rng(1), np.random.default_rng(2)])
    c = net.plan(obs, warm, [np.random.default_rng(3), np.random.default_rng(4)])
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all(np.abs(a) <= TASK.u_max)


def test_k_and_u_can_change_at_test_time():
    net = tiny()
    bigger = PiNet(**dict(net.config(), K=32, U=3), params=net.params)
    out = bigger.plan(np.ones(TASK.obs_dim), np.zeros((3, 1)), np.random.default_rng(0))
    assert out.shape == (3, 1)


def test_loss_needs_noise_or_generator():
    net = tiny()
    obs, warm, target, noise = fixed_inputs(net)
    batch = {"obs": obs, "warm": warm, "target": target}
    with pytest.raises(ValueError):
        net.loss(net.tensors(), batch)
    fixed = net.loss(net.tensors(), dict(batch, noise=noise)).item()
    assert fixed == net.loss(net.tensors(), dict(batch, noise=noise)).item()


def test_tape_size_matches_analytic_count():
    net = PiNet.for_task(TASK)          # hidden 64, H 20, K 100, U 1
    obs = np.ones((1, TASK.obs_dim))
    batch = {"obs": obs, "warm": np.zeros((1, 20, 1)), "target": np.zeros((1, 20, 1))}
    tape = ad.Tape()
    net.loss(net.tensors(tape), batch, rng=np.random.default_rng(0))
    ratio = tape.stored_floats() / net.analytic_tape_floats()
    assert 1.0 <= ratio <= 1.1


@given(st.integers(1, 4))
def test_tape_grows_linearly_in_u(U):
    net = tiny(U=U)
    obs, warm, target, noise = fixed_inputs(net, B=1)
    tape = ad.Tape()
    net.loss(net.tensors(tape), {"obs": obs, "warm": warm, "target": target, "noise": noise})
    per_u = tape.stored_floats() / net.analytic_tape_floats()
    assert 1.0 <= per_u <= 1.5


def test_memory_budget_rejects_many_iterations():
    PiNet.for_task(TASK, U=1, batch_size=64)
    with pytest.raises(ConfigError):
        PiNet.for_task(TASK, U=200, batch_size=64)


def test_invalid_hyperparameters():
    for bad in (dict(lam=0.0), dict(nu=0.5), dict(K=0), dict(U=0)):
        with pytest.raises(ConfigError):
            tiny(**bad)


def test_training_reduces_loss_on_fixed_noise():
    from mpcdagger.optim import Adam
    net = tiny()
    obs, warm, _, noise = fixed_inputs(net, B=8)
    target = np.tile(np.linspace(-3, 3, 3)[None, :, None], (8, 1, 1))
    batch = {"obs": obs, "warm": warm, "target": target, "noise": noise}
    params = dict(net.params)
    opt = Adam(params, lr=1e-2)
    first = None
    for _ in range(150):
        tape = ad.Tape()
        net.set_params(params)
        P = net.tensors(tape)
        loss = net.loss(P, batch)
        first = loss.item() if first is None else first
        g = tape.backward(loss)
        params = opt.step(params, {k: g[P[k]] for k in params})
    net.set_params(params)
    assert net.loss(net.tensors(), batch).item() < 0.5 * first
