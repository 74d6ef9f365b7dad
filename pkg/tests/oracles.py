"""Independent reference computations used by the tests.

Nothing here imports the package's autodiff or MPPI code; each oracle is a
direct numpy transcription of the quantity it checks.
"""

import numpy as np


def softmax_weights(costs, lam):
    """exp(-(S - min S)/lam) normalised along the last axis."""
    c = np.asarray(costs, float)
    z = np.exp(-(c - c.min(axis=-1, keepdims=True)) / lam)
    return z / z.sum(axis=-1, keepdims=True)


def mppi_oracle(u, eps, costs, lam, dt):
    """u + sum_k w_k eps_k / sqrt(dt) with explicit loops over the sample axis."""
    w = softmax_weights(costs, lam)
    out = np.array(u, float, copy=True)
    for k in range(eps.shape[-3]):
        out = out + w[..., k, None, None] * eps[..., k, :, :] / np.sqrt(dt)
    return out


def argmin_oracle(u, eps, costs, dt):
    """The lam -> 0 limit: the single best sample's perturbation."""
    k = int(np.argmin(costs))
    return u + eps[k] / np.sqrt(dt)


def cartpole_reference(x0, u, p, T, dt=1e-3):
    """Cart-pole integrated with small-step classic RK4 from the Lagrangian form.

    Mass matrix M(th) [xdd, thdd] = rhs is solved directly instead of using the
    closed-form accelerations, so it shares no code with the package.
    """
    M_c, m, l, g, b = p.cart_mass, p.pole_mass, p.pole_length, p.gravity, p.friction

    def f(s):
        _, xd, th, thd = s
        M = np.array([[M_c + m, m * l * np.cos(th)],
                      [m * l * np.cos(th), m * l * l]])
        rhs = np.array([u - b * xd + m * l * thd ** 2 * np.sin(th),
                        -m * g * l * np.sin(th)])
        xdd, thdd = np.linalg.solve(M, rhs)
        return np.array([xd, xdd, thd, thdd])

    s = np.array(x0, float)
    for _ in range(int(round(T / dt))):
        k1 = f(s)
        k2 = f(s + 0.5 * dt * k1)
        k3 = f(s + 0.5 * dt * k2)
        k4 = f(s + dt * k3)
        s = s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return s


def cartpole_energy_oracle(s, p):
    x, xd, th, thd = s
    m, l = p.pole_mass, p.pole_length
    px_d = xd + l * np.cos(th) * thd
    py_d = l * np.sin(th) * thd
    kin = 0.5 * p.cart_mass * xd ** 2 + 0.5 * m * (px_d ** 2 + py_d ** 2)
    return kin - m * p.gravity * l * np.cos(th)


def dataset_size(iterations, episodes, steps):
    """Counting oracle for aggregated DAgger data without divergence."""
    return sum(episodes * steps for _ in range(iterations))
