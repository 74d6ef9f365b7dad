"""Shared integration and task plumbing for the simulators."""

from __future__ import annotations

import dataclasses

import numpy as np

FAILURE_COST = 100.0


class DivergenceError(FloatingPointError):
    """A simulated trajectory produced a non-finite state."""


def rk4(deriv, x: np.ndarray, u: np.ndarray, dt: float, substeps: int = 1) -> np.ndarray:
    """Integrate ``deriv(x, u)`` over ``dt`` with ``substeps`` classic RK4 steps, ``u`` held."""
    h = dt / substeps
    for _ in range(substeps):
        k1 = deriv(x, u)
        k2 = deriv(x + 0.5 * h * k1, u)
        k3 = deriv(x + 0.5 * h * k2, u)
        k4 = deriv(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def wrap_angle(a):
    """Map angles to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def is_failure(cost: float) -> bool:
    return not np.isfinite(cost) or cost > FAILURE_COST


class Task:
    """A simulator plus the episode protocol around it.

    Subclasses define ``derivatives``, ``observe``, ``running_cost``,
    ``task_cost`` and ``sample_initial_state``; this base class supplies the
    noisy discrete step and parameter perturbation.
    """

    name: str
    state_dim: int
    control_dim: int
    obs_dim: int
    dt: float
    train_steps: int
    test_steps: int

    def __init__(self, params, substeps: int = 1):
        self.params = params
        self.substeps = substeps

    # control limits as arrays of shape [m]
    control_low: np.ndarray
    control_high: np.ndarray
    # fixed affine normalisation used by the learned policies
    control_offset: np.ndarray
    control_scale: np.ndarray

    def derivatives(self, state, control, params=None):
        raise NotImplementedError

    def clip(self, u):
        return np.clip(u, self.control_low, self.control_high)

    def integrate(self, state, control, params=None):
        """Noise-free RK4 step of length ``dt``; no divergence check."""
        params = self.params if params is None else params
        return rk4(lambda x, u: self.derivatives(x, u, params),
                   np.asarray(state, float), np.asarray(control, float),
                   self.dt, self.substeps)

    def step(self, state, control, rng=None, params=None, check: bool = True):
        """One environment step with additive control noise ``sigma * eps * sqrt(dt)``.

        ``state``/``control`` may carry leading batch dimensions; one noise
        vector is drawn per control vector.  ``rng`` is a generator or, for a
        [B, m] control batch, a sequence of B generators (one per row).
        """
        params = self.params if params is None else params
        control = np.asarray(control, float)
        if params.noise_std > 0.0:
            if rng is None:
                raise ValueError("a random generator is required when noise_std > 0")
            if isinstance(rng, (list, tuple)):
                eps = np.stack([r.standard_normal(control.shape[-1]) for r in rng])
            else:
                eps = rng.standard_normal(control.shape)
            control = control + params.noise_std * np.sqrt(self.dt) * eps
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = self.integrate(state, control, params)
        if check and not np.all(np.isfinite(nxt)):
            raise DivergenceError(f"{self.name}: state diverged")
        return nxt

    def with_params(self, **changes) -> Task:
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = dataclasses.replace(self.params, **changes)
        return clone

    def param_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(self.params))
