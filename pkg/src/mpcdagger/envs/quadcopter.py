"""Plus-configuration quadcopter tracking a closed reference curve.

State (13): position p, velocity v, ZYX Euler angles (roll, pitch, yaw), body
rates w, and the reference clock tau (d tau/dt = 1).  The clock lets the
time-indexed target be read off the state.  Controls are the four rotor
thrusts in newtons; rotors 1..4 sit on the +x, +y, -x, -y arms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Task


@dataclass(frozen=True)
class QuadParams:
    mass: float = 0.7
    arm_length: float = 0.35
    inertia: tuple = (0.0075, 0.0075, 0.013)
    gravity: float = 9.81
    thrust_coeff: float = 1.0
    torque_coeff: float = 0.016
    noise_std: float = 0.1
    init_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "inertia", tuple(float(v) for v in self.inertia))
        if len(self.inertia) != 3 or min(self.inertia) <= 0:
            raise ValueError("inertia must be three positive values")
        for name in ("mass", "arm_length", "gravity", "thrust_coeff"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_std < 0 or self.init_offset < 0 or self.torque_coeff < 0:
            raise ValueError("noise_std, init_offset and torque_coeff must be non-negative")


@dataclass(frozen=True)
class TargetTrajectory:
    kind: str
    waypoints: np.ndarray
    period: float
    dt: float
    altitude: float = 1.0

    def position(self, tau):
        return _curve(self.kind, np.asarray(tau, float), self.period, self.altitude)[0]

    def velocity(self, tau):
        return _curve(self.kind, np.asarray(tau, float), self.period, self.altitude)[1]


def _curve(kind, tau, period, altitude):
    w = 2.0 * np.pi / period
    s, c = np.sin(w * tau), np.cos(w * tau)
    z = np.full_like(tau, altitude)
    zero = np.zeros_like(tau)
    if kind == "circle":
        pos = np.stack([c, s, z], axis=-1)
        vel = np.stack([-w * s, w * c, zero], axis=-1)
    elif kind == "figure8":
        # lemniscate of Gerono, 2 m wide
        pos = np.stack([s, s * c, z], axis=-1)
        vel = np.stack([w * c, w * (c * c - s * s), zero], axis=-1)
    else:
        raise ValueError(f"unknown target kind {kind!r}")
    return pos, vel


def make_target(kind: str, period: float = 15.0, dt: float = 0.02,
                altitude: float = 1.0) -> TargetTrajectory:
    n = int(round(period / dt))
    tau = np.linspace(0.0, period, n)
    pts = _curve(kind, tau, period, altitude)[0]
    return TargetTrajectory(kind, pts, period, dt, altitude)


def euler_to_thrust_axis(angles):
    """World-frame direction of the body z axis for ZYX Euler angles."""
    phi, th, psi = angles[..., 0], angles[..., 1], angles[..., 2]
    cph, sph = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(th), np.sin(th)
    cps, sps = np.cos(psi), np.sin(psi)
    return np.stack([cps * sth * cph + sps * sph,
                     sps * sth * cph - cps * sph,
                     cth * cph], axis=-1)


def quad_derivatives(state, control, p: QuadParams):
    state = np.asarray(state, float)
    control = np.asarray(control, float)
    if state.shape[-1] != 13 or control.shape[-1] != 4:
        raise ValueError(f"quadcopter expects state [...,13] and control [...,4], "
                         f"got {state.shape} and {control.shape}")
    v = state[..., 3:6]
    ang = state[..., 6:9]
    om = state[..., 9:12]
    f = p.thrust_coeff * control
    thrust = (f[..., 0] + f[..., 2]) + (f[..., 1] + f[..., 3])
    acc = (thrust / p.mass)[..., None] * euler_to_thrust_axis(ang)
    acc = acc - np.array([0.0, 0.0, p.gravity])

    L = p.arm_length
    tau = np.stack([L * (f[..., 1] - f[..., 3]),
                    L * (f[..., 2] - f[..., 0]),
                    p.torque_coeff * (f[..., 0] - f[..., 1] + f[..., 2] - f[..., 3])], axis=-1)
    J = np.asarray(p.inertia)
    om_dot = (tau - np.cross(om, J * om)) / J

    phi, th = ang[..., 0], ang[..., 1]
    pr, qr, rr = om[..., 0], om[..., 1], om[..., 2]
    sph, cph = np.sin(phi), np.cos(phi)
    tth, cth = np.tan(th), np.cos(th)
    ang_dot = np.stack([pr + sph * tth * qr + cph * tth * rr,
                        cph * qr - sph * rr,
                        (sph * qr + cph * rr) / cth], axis=-1)
    clock = np.ones(state.shape[:-1] + (1,))
    return np.concatenate([v, acc, ang_dot, om_dot, clock], axis=-1)


class QuadTracking(Task):
    state_dim = 13
    control_dim = 4
    obs_dim = 14
    dt = 0.02
    train_steps = 150
    test_steps = 750
    period = 15.0

    # expert running-cost weights: position error, velocity error, tilt, body rates
    q_weights = (50.0, 1.0, 1.0, 0.1)
    r_weight = 0.01
    thrust_max = 5.0

    def __init__(self, kind: str = "circle", params: QuadParams | None = None,
                 substeps: int = 1):
        super().__init__(params or QuadParams(), substeps)
        self.kind = kind
        self.name = {"circle": "quad-circle", "figure8": "quad-fig8"}[kind]
        self.target = make_target(kind, self.period, self.dt)
        self.control_low = np.zeros(4)
        self.control_high = np.full(4, self.thrust_max)
        hover = self.hover_thrust()
        self.control_offset = np.full(4, hover)
        self.control_scale = np.full(4, hover)

    def hover_thrust(self, params: QuadParams | None = None) -> float:
        p = self.params if params is None else params
        return p.mass * p.gravity / 4.0 / p.thrust_coeff

    def derivatives(self, state, control, params=None):
        return quad_derivatives(state, control, self.params if params is None else params)

    def observe(self, state):
        """Tracking-error features: position/velocity error, attitude, rates, clock phase."""
        state = np.asarray(state, float)
        tau = state[..., 12]
        w = 2.0 * np.pi / self.period
        dp = state[..., 0:3] - self.target.position(tau)
        dv = state[..., 3:6] - self.target.velocity(tau)
        return np.concatenate([dp, dv, state[..., 6:12],
                               np.sin(w * tau)[..., None], np.cos(w * tau)[..., None]], axis=-1)

    def running_cost(self, state):
        wp, wv, wa, ww = self.q_weights
        tau = state[..., 12]
        dp = state[..., 0:3] - self.target.position(tau)
        dv = state[..., 3:6] - self.target.velocity(tau)
        return (wp * (dp ** 2).sum(-1) + wv * (dv ** 2).sum(-1)
                + wa * (state[..., 6:8] ** 2).sum(-1) + ww * (state[..., 9:12] ** 2).sum(-1))

    @property
    def control_cost_matrix(self):
        return np.diag([self.r_weight] * 4)

    def task_cost(self, trajectory):
        """Total over timesteps of the distance to the nearest target waypoint.

        Leaving the valid attitude envelope marks the trajectory as failed (inf).
        """
        traj = np.asarray(trajectory, float)
        if traj.ndim != 2 or len(traj) == 0:
            raise ValueError("trajectory must be a non-empty [T, 13] array")
        if not np.all(np.isfinite(traj)):
            return float("inf")
        if not np.all(self.attitude_valid(traj)):
            return float("inf")
        pos = traj[:, 0:3]
        d2 = ((pos[:, None, :] - self.target.waypoints[None, :, :]) ** 2).sum(-1)
        return float(np.sqrt(d2.min(axis=1)).sum())

    def attitude_valid(self, states) -> np.ndarray:
        ang = np.asarray(states)[..., 6:8]
        return np.all(np.abs(ang) < np.pi / 2, axis=-1)

    def sample_initial_state(self, rng, n: int | None = None):
        size = () if n is None else (n,)
        n_wp = len(self.target.waypoints)
        idx = rng.integers(0, n_wp, size=size)
        tau = idx * (self.period / (n_wp - 1))
        pos = self.target.position(tau)
        vel = self.target.velocity(tau)
        off = self.params.init_offset
        if off > 0:
            pos = pos + rng.uniform(-off, off, size=size + (3,))
        rest = np.zeros(size + (6,))
        return np.concatenate([pos, vel, rest, np.asarray(tau, float)[..., None]], axis=-1)
