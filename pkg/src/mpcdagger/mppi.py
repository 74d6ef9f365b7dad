"""Model predictive path integral control over a known simulator.

Noise convention: the stored noise ``eps`` is the Brownian increment of the
control channel, ``eps = sigma * sqrt(dt) * z`` with ``z ~ N(0, I)``, so the
control perturbation actually injected into a rollout is ``eps / sqrt(dt)``
and the update ``u + sum_k w_k eps_k / sqrt(dt)`` moves ``u`` exactly onto
the weighted average of the sampled control sequences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

log = logging.getLogger(__name__)

# offset (in units of lambda) assigned to diverged rollouts; exp(-1e4) == 0.0
_DIVERGED_OFFSET = 1e4


@dataclass
class MPPIConfig:
    K: int = 100
    H: int = 20
    lam: float = 1.0
    nu: float = 1.5
    dt: float = 0.05
    sigma: float | tuple = 5.0
    R: tuple | None = None
    passes: int = 1

    def __post_init__(self):
        if self.K < 1 or self.H < 1 or self.passes < 1:
            raise ValueError("K, H and passes must be >= 1")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.nu < 1:
            raise ValueError("nu must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if np.any(np.asarray(self.sigma) < 0):
            raise ValueError("sigma must be non-negative")
        if self.R is not None and np.any(np.asarray(self.R) < 0):
            raise ValueError("R diagonal entries must be non-negative")


@dataclass
class TrajectoryBatch:
    """K sampled rollouts per planning problem; leading batch axes are allowed.

    noise: [..., K, H, m]; states: [..., K, H+1, n]; costs: [..., K].
    """
    noise: np.ndarray
    states: np.ndarray
    costs: np.ndarray
    baseline: np.ndarray = field(repr=False, default=None)


def shift_warm_start(u):
    """Drop the first control and repeat the last: ``[u2..uH, uH]``."""
    u = np.asarray(u)
    return np.concatenate([u[..., 1:, :], u[..., -1:, :]], axis=-2)


def step_costs(task, cfg: MPPIConfig, states, u, eps, R):
    """Control-cost adjusted running cost per step, already multiplied by dt.

    states: [..., K, H+1, n] (entry j+1 is reached by applying step j);
    u: [..., H, m] baseline; eps: [..., K, H, m].
    """
    dt = cfg.dt
    q = task.running_cost(states[..., 1:, :])
    ub = u[..., None, :, :]
    ctrl = 0.5 * np.einsum("...i,ij,...j->...", u, R, u)[..., None, :]
    cross = cfg.lam * (ub * eps).sum(-1) / np.sqrt(dt)
    quad = 0.5 * cfg.lam * (1.0 - 1.0 / cfg.nu) * (eps * eps).sum(-1) / dt
    return (q + ctrl + cross + quad) * dt


def sample_rollouts(task, x, u, cfg: MPPIConfig, rngs) -> TrajectoryBatch:
    """Roll K perturbed copies of ``u`` through the task dynamics from ``x``.

    ``x`` is [n] or [B, n] and ``u`` is [H, m] or [B, H, m]; ``rngs`` is one
    generator per batch row (a single generator for the unbatched form).
    """
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    single = x.ndim == 1
    if single:
        x, u, rngs = x[None], u[None], [rngs]
    B, n = x.shape
    if u.shape != (B, cfg.H, task.control_dim):
        raise ValueError(f"control sequence shape {u.shape} != {(B, cfg.H, task.control_dim)}")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(u)):
        raise ValueError("sample_rollouts: non-finite state or controls")
    K, H, m = cfg.K, cfg.H, task.control_dim
    sigma = np.broadcast_to(np.asarray(cfg.sigma, float), (m,))
    z = np.stack([r.standard_normal((K, H, m)) for r in rngs])
    eps = sigma * np.sqrt(cfg.dt) * z
    perturbed = u[:, None] + eps / np.sqrt(cfg.dt)

    states = np.empty((B, K, H + 1, n))
    states[:, :, 0] = x[:, None]
    cur = states[:, :, 0].reshape(B * K, n)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(H):
            ctrl = task.clip(perturbed[:, :, j].reshape(B * K, m))
            cur = task.integrate(cur, ctrl)
            states[:, :, j + 1] = cur.reshape(B, K, n)
        R = _control_cost(task, cfg)
        costs = step_costs(task, cfg, states, u, eps, R).sum(-1)
    costs[~np.isfinite(costs)] = np.inf
    costs[~np.all(np.isfinite(states), axis=(-1, -2))] = np.inf
    batch = TrajectoryBatch(eps, states, costs, u)
    if single:
        batch = TrajectoryBatch(eps[0], states[0], costs[0], u[0])
    return batch


def _control_cost(task, cfg):
    if cfg.R is not None:
        return np.diag(np.broadcast_to(np.asarray(cfg.R, float), (task.control_dim,)))
    return task.control_cost_matrix


def recompute_costs(task, cfg: MPPIConfig, batch: TrajectoryBatch) -> np.ndarray:
    """S-tilde recomputed from the stored states and noise."""
    with np.errstate(over="ignore", invalid="ignore"):
        s = step_costs(task, cfg, batch.states, batch.baseline, batch.noise,
                       _control_cost(task, cfg)).sum(-1)
    s[~np.isfinite(s)] = np.inf
    return s


def control_update(u, eps, costs, lam: float, dt: float):
    """Cost-weighted noise average ``u + sum_k w_k eps_k / sqrt(dt)`` on autodiff tensors.

    Shapes: u [..., H, m], eps [..., K, H, m], costs [..., K].  Returns
    ``(u_star, weights)``.  The weights use a min-shifted softmax; the shift is
    a constant, so gradients are unaffected.
    """
    u, eps, costs = (t if isinstance(t, ad.Tensor) else ad.Tensor(t) for t in (u, eps, costs))
    lead = costs.shape[:-1]
    K = costs.shape[-1]
    if eps.shape[:-2] != lead + (K,) or u.shape != lead + eps.shape[-2:]:
        raise ad.ShapeError(f"control_update: u {u.shape}, eps {eps.shape}, costs {costs.shape}")
    D = int(np.prod(u.shape[-2:]))
    floor = np.broadcast_to(costs.data.min(axis=-1, keepdims=True), costs.shape)
    shifted = ad.add(costs, ad.Tensor(-floor))
    e = ad.exp(ad.scale(shifted, -1.0 / lam))
    w = ad.divide(e, ad.expand(ad.reduce_sum(e, axis=-1), -1, K))
    flat = ad.reshape(eps, lead + (K, D))
    avg = ad.reduce_sum(ad.mul(ad.expand(w, -1, D), flat), axis=-2)
    step = ad.reshape(ad.scale(avg, 1.0 / np.sqrt(dt)), u.shape)
    return ad.add(u, step), w


def mppi_update(u, batch: TrajectoryBatch, cfg: MPPIConfig, low=None, high=None,
                return_info: bool = False):
    """Closed-form MPPI update of the baseline ``u`` from a rollout batch.

    Diverged rollouts carry infinite cost and get zero weight.  Rows in which
    every rollout diverged keep ``u`` unchanged and are flagged.
    """
    u = np.asarray(u, float)
    costs = np.array(batch.costs, float)
    finite = np.isfinite(costs)
    dead = ~finite.any(axis=-1)
    if np.any(~finite):
        best = np.where(finite, costs, np.inf).min(axis=-1, keepdims=True)
        best = np.where(np.isfinite(best), best, 0.0)
        costs = np.where(finite, costs, best + _DIVERGED_OFFSET * cfg.lam)
    u_star, w = control_update(u, batch.noise, costs, cfg.lam, cfg.dt)
    out = np.array(u_star.data)
    if np.any(dead):
        log.warning("mppi_update: every rollout diverged in %d problem(s)", int(np.sum(dead)))
        out[dead] = u[dead]
    if low is not None or high is not None:
        out = np.clip(out, low, high)
    if return_info:
        return out, {"weights": np.array(w.data), "degenerate": dead}
    return out


class MPPIExpert:
    """Receding-horizon MPPI over ``task``'s dynamics (the expert's fixed model)."""

    def __init__(self, task, cfg: MPPIConfig | None = None):
        self.task = task
        self.cfg = cfg or default_mppi_config(task)
        if abs(self.cfg.dt - task.dt) > 1e-12:
            raise ValueError("MPPI dt must match the task dt")

    @property
    def horizon(self) -> int:
        return self.cfg.H

    def initial_sequence(self, batch: int | None = None):
        shape = (self.cfg.H, self.task.control_dim)
        return np.zeros(shape if batch is None else (batch,) + shape)

    def plan(self, x, warm, rngs):
        """Run ``cfg.passes`` sample/update passes starting from ``warm``."""
        u = np.asarray(warm, float)
        for _ in range(self.cfg.passes):
            batch = sample_rollouts(self.task, x, u, self.cfg, rngs)
            u = mppi_update(u, batch, self.cfg, self.task.control_low, self.task.control_high)
        return u


def expert_plan(task, x, warm, cfg: MPPIConfig, rng):
    return MPPIExpert(task, cfg).plan(x, warm, rng)


def default_mppi_config(task, **overrides) -> MPPIConfig:
    """Per-task defaults: sigma is ~25% of the cartpole force range, ~10% of hover thrust."""
    if task.name == "cartpole":
        base = dict(K=100, H=20, lam=1.0, nu=1.5, dt=task.dt, sigma=0.25 * 2 * task.u_max)
    else:
        base = dict(K=100, H=20, lam=0.1, nu=1.5, dt=task.dt, sigma=0.1 * task.hover_thrust())
    base.update(overrides)
    return MPPIConfig(**base)
