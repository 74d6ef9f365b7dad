"""Cart-pole swing-up with viscous rail friction.

State ``[x, x_dot, theta, theta_dot]`` with ``theta = 0`` hanging down and
``theta = pi`` upright; the pole is a point mass at distance ``l`` from the
pivot.  The control is the horizontal force on the cart in newtons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Task, wrap_angle


@dataclass(frozen=True)
class CartPoleParams:
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_length: float = 0.5
    friction: float = 0.1
    noise_std: float = 0.5
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("cart_mass", "pole_mass", "pole_length", "gravity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.friction < 0 or self.noise_std < 0:
            raise ValueError("friction and noise_std must be non-negative")


def cartpole_derivatives(state, control, p: CartPoleParams):
    state = np.asarray(state, float)
    control = np.asarray(control, float)
    if state.shape[-1] != 4 or control.shape[-1] != 1:
        raise ValueError(f"cartpole expects state [...,4] and control [...,1], "
                         f"got {state.shape} and {control.shape}")
    xd = state[..., 1]
    th = state[..., 2]
    thd = state[..., 3]
    f = control[..., 0] - p.friction * xd
    s, c = np.sin(th), np.cos(th)
    mp, l, g = p.pole_mass, p.pole_length, p.gravity
    den = p.cart_mass + mp * s * s
    xdd = (f + mp * s * (l * thd * thd + g * c)) / den
    thdd = (-f * c - mp * l * thd * thd * c * s - (p.cart_mass + mp) * g * s) / (l * den)
    return np.stack([xd, xdd, thd, thdd], axis=-1)


def cartpole_energy(state, p: CartPoleParams):
    """Total mechanical energy; potential is zero at the pivot height."""
    state = np.asarray(state, float)
    xd, th, thd = state[..., 1], state[..., 2], state[..., 3]
    mp, l = p.pole_mass, p.pole_length
    kin = (0.5 * (p.cart_mass + mp) * xd ** 2 + mp * l * xd * thd * np.cos(th)
           + 0.5 * mp * l * l * thd ** 2)
    return kin - mp * p.gravity * l * np.cos(th)


class CartPoleSwingUp(Task):
    name = "cartpole"
    state_dim = 4
    control_dim = 1
    obs_dim = 5
    dt = 0.05
    train_steps = 100
    test_steps = 100
    x_range = (-5.0, 5.0)

    # expert running-cost weights on (x, theta error, x_dot, theta_dot) and R
    q_weights = (30.0, 10.0, 5.0, 0.2)
    r_weight = 0.01
    # task-cost weight on the angle error; at 2 an uncontrolled pole never scores <= 100
    angle_weight = 2.0

    def __init__(self, params: CartPoleParams | None = None, u_max: float = 10.0,
                 substeps: int = 4):
        super().__init__(params or CartPoleParams(), substeps)
        self.u_max = float(u_max)
        self.control_low = np.array([-u_max])
        self.control_high = np.array([u_max])
        self.control_offset = np.zeros(1)
        self.control_scale = np.array([u_max])

    def derivatives(self, state, control, params=None):
        return cartpole_derivatives(state, control, self.params if params is None else params)

    def observe(self, state):
        """Normalised features ``[x/5, x_dot/5, sin th, cos th, th_dot/10]``."""
        state = np.asarray(state, float)
        th = state[..., 2]
        return np.stack([state[..., 0] / 5.0, state[..., 1] / 5.0, np.sin(th),
                         np.cos(th), state[..., 3] / 10.0], axis=-1)

    def running_cost(self, state):
        """Expert state cost q(x), quadratic about the upright centred state."""
        wx, wth, wv, ww = self.q_weights
        err = wrap_angle(state[..., 2] - np.pi)
        return (wx * state[..., 0] ** 2 + wth * err ** 2 + wv * state[..., 1] ** 2
                + ww * state[..., 3] ** 2)

    @property
    def control_cost_matrix(self):
        return np.diag([self.r_weight])

    def step_deviation(self, states):
        """Per-state squared distance to upright-centred: x^2 + (w * wrap(theta - pi))^2."""
        states = np.asarray(states, float)
        err = self.angle_weight * wrap_angle(states[..., 2] - np.pi)
        return states[..., 0] ** 2 + err ** 2

    def task_cost(self, trajectory):
        """Sum over the second half of the episode of the squared upright-centred distance."""
        traj = np.asarray(trajectory, float)
        if traj.ndim != 2 or len(traj) == 0:
            raise ValueError("trajectory must be a non-empty [T, 4] array")
        if not np.all(np.isfinite(traj)):
            return float("inf")
        return float(self.step_deviation(traj[len(traj) // 2:]).sum())

    def sample_initial_state(self, rng, n: int | None = None):
        size = () if n is None else (n,)
        x = rng.uniform(*self.x_range, size=size)
        th = rng.uniform(0.0, 2.0 * np.pi, size=size)
        zeros = np.zeros(size)
        return np.stack([x, zeros, th, zeros], axis=-1)
