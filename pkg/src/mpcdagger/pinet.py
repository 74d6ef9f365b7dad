"""PI-Net: a differentiable MPPI planner over learned abstract dynamics and cost.

One forward pass (per iteration ``U``):

1. the abstract state is the observation zero-padded to ``hidden`` entries;
2. K perturbed copies of the baseline sequence drive a tanh RNN cell,
   ``h_{t+1} = tanh(Wd [h_t || u_t + eps_t/sqrt(dt)] + bd)``;
3. a one-hidden-layer cost FNN scores every ``[h_{t+1} || u_t + eps_t/sqrt(dt)]``
   and the scores are summed over the horizon;
4. the MPPI update (shared with :mod:`mpcdagger.mppi`) produces the output.

Everything runs on the autodiff tape so the imitation loss trains both
networks end to end.  The noise is a constant input of the graph.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .mppi import control_update
from .policies import Policy, SequencePolicy, count_params, mse

__all__ = ["ConfigError", "PiNet", "control_update", "cost_trajectories", "init_hidden",
           "pinet_forward", "pinet_grad_check", "pinet_loss", "sample_abstract_rollouts",
           "unflatten_params"]

DEFAULT_MEMORY_BUDGET = 8 * 1024 ** 3


class ConfigError(ValueError):
    """Invalid planner configuration."""


def init_hidden(x, hidden: int = 64):
    """Zero-pad the state to the abstract hidden width (no learned parameters)."""
    if not isinstance(x, ad.Tensor):
        x = ad.Tensor(x)
    n = x.shape[-1]
    if n > hidden:
        raise ConfigError(f"state dimension {n} exceeds abstract hidden width {hidden}")
    if n == hidden:
        return x
    return ad.concat([x, ad.Tensor(np.zeros(x.shape[:-1] + (hidden - n,)))], axis=-1)


def sample_abstract_rollouts(P, h0, u, eps, dt: float):
    """Roll K noisy copies of ``u`` through the abstract dynamics cell.

    h0: [..., hidden]; u: [..., H, m]; eps: [..., K, H, m] (constant).
    Returns per-step lists ``(hidden states [..., K, hidden], perturbed controls [..., K, m])``.
    """
    K, H = eps.shape[-3], eps.shape[-2]
    eps_t = eps.data if isinstance(eps, ad.Tensor) else np.asarray(eps)
    perturbed = ad.add(ad.expand(u, -3, K), ad.Tensor(eps_t / np.sqrt(dt)))
    h = ad.expand(h0, -2, K)
    states, controls = [], []
    for t in range(H):
        ut = ad.slice_(perturbed, (Ellipsis, t, slice(None)))
        h = ad.tanh(ad.affine(P["Wd"], ad.concat([h, ut], axis=-1), P["bd"]))
        states.append(h)
        controls.append(ut)
    return states, controls


def cost_trajectories(P, states, controls):
    """S_k = sum_t FNN([h_{t+1,k} || u_{t,k}]), shape [..., K]."""
    total = None
    for h, ut in zip(states, controls):
        hid = ad.tanh(ad.affine(P["Wc1"], ad.concat([h, ut], axis=-1), P["bc1"]))
        c = ad.affine(P["Wc2"], hid, P["bc2"])
        total = c if total is None else ad.add(total, c)
    return ad.reshape(total, total.shape[:-1])


def pinet_forward(net: PiNet, P, obs, warm_norm, noise):
    """U planning iterations; ``noise`` is [U, ..., K, H, m].  Output is unclamped."""
    h0 = init_hidden(obs, net.hidden)
    u = warm_norm
    for i in range(net.U):
        eps = noise[i]
        states, controls = sample_abstract_rollouts(P, h0, u, eps, net.dt)
        costs = cost_trajectories(P, states, controls)
        u, _ = control_update(u, ad.Tensor(eps), costs, net.lam, net.dt)
    return u


def pinet_loss(predicted, expert):
    """Mean squared error over the whole H x m sequence."""
    if predicted.shape != np.shape(expert if not isinstance(expert, ad.Tensor) else expert.data):
        raise ad.ShapeError("pinet_loss: predicted and expert shapes differ")
    return mse(predicted, expert)


class PiNet(SequencePolicy):
    """The planner as a sequence policy (checkpoint kind ``pinet``).

    ``sigma`` is the sampling stddev in normalised control units.  ``K`` and
    ``U`` may be raised at test time without retraining.
    """

    kind = "pinet"

    def __init__(self, obs_dim, control_dim, hidden=64, horizon=20, K=100, U=1,
                 lam=1.0, nu=1.5, dt=0.05, sigma=0.5, memory_budget=DEFAULT_MEMORY_BUDGET,
                 batch_size=64, **kwargs):
        if obs_dim > hidden:
            raise ConfigError(f"state dimension {obs_dim} exceeds abstract hidden width {hidden}")
        if not lam > 0 or nu < 1 or U < 1 or K < 1:
            raise ConfigError("PI-Net needs lam > 0, nu >= 1, U >= 1, K >= 1")
        self.K, self.U = int(K), int(U)
        self.lam, self.nu, self.dt, self.sigma = float(lam), float(nu), float(dt), float(sigma)
        self.memory_budget = memory_budget
        self.batch_size = int(batch_size)
        super().__init__(obs_dim, control_dim, hidden=hidden, horizon=horizon, **kwargs)
        self.check_memory(self.batch_size)

    @classmethod
    def for_task(cls, task, horizon=20, rng=None, **kwargs):
        kwargs.setdefault("dt", task.dt)
        kwargs.setdefault("sigma", 0.5 if task.name == "cartpole" else 0.1)
        return cls(task.obs_dim, task.control_dim, horizon=horizon,
                   control_offset=task.control_offset, control_scale=task.control_scale,
                   control_low=task.control_low, control_high=task.control_high,
                   rng=rng, **kwargs)

    def config(self):
        return dict(super().config(), K=self.K, U=self.U, lam=self.lam, nu=self.nu, dt=self.dt,
                    sigma=self.sigma, memory_budget=self.memory_budget,
                    batch_size=self.batch_size)

    def layout(self):
        h, m = self.hidden, self.control_dim
        return [("Wd", (h, h + m), h + m), ("bd", (h,), h + m),
                ("Wc1", (h, h + m), h + m), ("bc1", (h,), h + m),
                ("Wc2", (1, h), h), ("bc2", (1,), h)]

    # -- memory accounting -------------------------------------------------
    def floats_per_evaluation(self) -> int:
        """Activations stored per (sample, step): dynamics cell plus cost FNN."""
        h, m = self.hidden, self.control_dim
        cell = (h + m) + h + h
        cost = (h + m) + h + h + 1
        return cell + cost

    def analytic_tape_floats(self) -> int:
        """Per-example tape storage predicted for one forward pass: U * K * H evaluations."""
        return self.U * self.K * self.horizon * self.floats_per_evaluation()

    def estimated_training_bytes(self, batch_size: int) -> int:
        return 8 * batch_size * self.analytic_tape_floats()

    def check_memory(self, batch_size: int) -> None:
        need = self.estimated_training_bytes(batch_size)
        if self.memory_budget is not None and need > self.memory_budget:
            raise ConfigError(
                f"PI-Net training graph needs ~{need / 1024 ** 3:.1f} GiB "
                f"(U={self.U}, K={self.K}, H={self.horizon}, batch={batch_size}); "
                f"budget is {self.memory_budget / 1024 ** 3:.1f} GiB")

    # -- planning ----------------------------------------------------------
    def draw_noise(self, rngs, lead: tuple, K: int | None = None):
        """Noise tensor [U, *lead, K, H, m]; one generator per leading row."""
        K = self.K if K is None else K
        shape = (self.U, K, self.horizon, self.control_dim)
        if not lead:
            z = rngs.standard_normal(shape)
        else:
            z = np.stack([r.standard_normal(shape) for r in rngs], axis=1)
        return self.sigma * np.sqrt(self.dt) * z

    def forward(self, P, obs, warm_norm, noise=None):
        if noise is None:
            raise ValueError("PI-Net forward needs an explicit noise tensor")
        return pinet_forward(self, P, obs, warm_norm, noise)

    def plan(self, obs, warm, rngs=None):
        obs = np.asarray(obs, float)
        lead = obs.shape[:-1]
        noise = self.draw_noise(rngs, lead)
        raw = self.forward(self.tensors(), ad.Tensor(obs), ad.Tensor(self.normalise(warm)), noise)
        return self.emit(raw.data)

    def loss(self, P, batch, rng=None):
        obs = np.asarray(batch["obs"], float)
        noise = batch.get("noise")
        if noise is None:
            if rng is None:
                raise ValueError("PI-Net training needs a generator for fresh noise")
            z = rng.standard_normal((self.U,) + obs.shape[:-1]
                                    + (self.K, self.horizon, self.control_dim))
            noise = self.sigma * np.sqrt(self.dt) * z
        pred = self.forward(P, ad.Tensor(obs), ad.Tensor(self.normalise(batch["warm"])), noise)
        return pinet_loss(pred, self.normalise(batch["target"]))


def unflatten_params(net: Policy, x: ad.Tensor) -> dict:
    """Split a flat parameter vector (layout order) back into named tensors."""
    out, pos = {}, 0
    for name, shape, _ in net.layout():
        n = int(np.prod(shape))
        out[name] = ad.reshape(ad.slice_(x, slice(pos, pos + n)), shape)
        pos += n
    return out


def pinet_grad_check(net: PiNet, obs, warm, target, noise, h: float = 1e-5) -> float:
    """Max relative error of the end-to-end loss gradient w.r.t. every parameter."""
    flat = np.concatenate([net.params[name].ravel() for name, _, _ in net.layout()])
    warm_n, target_n = net.normalise(warm), net.normalise(target)

    def f(x):
        pred = pinet_forward(net, unflatten_params(net, x), ad.Tensor(obs), ad.Tensor(warm_n), noise)
        return pinet_loss(pred, target_n)

    return ad.grad_check(f, flat, h)


def pinet_param_count(obs_dim, control_dim, hidden=64, horizon=20):
    return count_params("pinet", obs_dim, control_dim, hidden, horizon)
