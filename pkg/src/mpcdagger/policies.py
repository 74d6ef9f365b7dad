"""Learned baseline policies: reactive FNN, state-sequence RNN, MPC-FNN and MPC-RNN.

Every network has one tanh hidden layer.  Networks work in normalised control
units; ``control_offset + control_scale * y`` maps a raw output ``y`` to a
physical control, and emitted controls are clamped to the actuator limits.
Training losses use the unclamped outputs.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

KINDS = ("fnn", "rnn", "mpc-fnn", "mpc-rnn", "pinet")
SEQUENCE_KINDS = ("mpc-fnn", "mpc-rnn", "pinet")
VANILLA_KINDS = ("fnn", "rnn")


def mse(pred: ad.Tensor, target) -> ad.Tensor:
    """Mean squared error over every entry."""
    diff = ad.add(pred, ad.negate(ad.Tensor(target) if not isinstance(target, ad.Tensor) else target))
    return ad.scale(ad.reduce_sum(ad.mul(diff, diff)), 1.0 / diff.size)


class Policy:
    """Base class: parameter layout, initialisation, normalisation and emission."""

    kind: str = ""
    sequence = False

    def __init__(self, obs_dim: int, control_dim: int, hidden: int = 64, horizon: int = 1,
                 control_offset=None, control_scale=None, control_low=None,
                 control_high=None, params: dict | None = None, rng=None):
        self.obs_dim = int(obs_dim)
        self.control_dim = int(control_dim)
        self.hidden = int(hidden)
        self.horizon = int(horizon)
        m = self.control_dim
        self.control_offset = np.zeros(m) if control_offset is None else np.asarray(control_offset, float)
        self.control_scale = np.ones(m) if control_scale is None else np.asarray(control_scale, float)
        self.control_low = _limits(control_low, m, -np.inf)
        self.control_high = _limits(control_high, m, np.inf)
        if params is None:
            params = self.init_params(np.random.default_rng(0) if rng is None else rng)
        self.set_params(params)

    # -- parameters ---------------------------------------------------------
    def layout(self) -> list[tuple[str, tuple, int]]:
        """(name, shape, fan_in) for every trainable array, in checkpoint order."""
        raise NotImplementedError

    def init_params(self, rng) -> dict:
        out = {}
        for name, shape, fan_in in self.layout():
            bound = 1.0 / np.sqrt(fan_in)
            out[name] = rng.uniform(-bound, bound, size=shape)
        return out

    def set_params(self, params: dict) -> None:
        fresh = {}
        for name, shape, _ in self.layout():
            arr = np.array(params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ad.ShapeError(f"{self.kind}: parameter {name} has shape {arr.shape}, expected {shape}")
            fresh[name] = arr
        self.params = fresh

    @property
    def n_params(self) -> int:
        return int(sum(np.prod(shape) for _, shape, _ in self.layout()))

    def tensors(self, tape: ad.Tape | None = None) -> dict:
        if tape is None:
            return {k: ad.Tensor(v) for k, v in self.params.items()}
        return {k: tape.leaf(v) for k, v in self.params.items()}

    def config(self) -> dict:
        """Constructor arguments other than the parameters (checkpoint header)."""
        return dict(obs_dim=self.obs_dim, control_dim=self.control_dim, hidden=self.hidden,
                    horizon=self.horizon, control_offset=self.control_offset.tolist(),
                    control_scale=self.control_scale.tolist(),
                    control_low=_listify(self.control_low), control_high=_listify(self.control_high))

    def copy(self):
        return type(self)(params=self.params, **self.config())

    # -- units ----------------------------------------------------------------
    def normalise(self, u):
        return (np.asarray(u, float) - self.control_offset) / self.control_scale

    def emit(self, raw):
        return np.clip(self.control_offset + self.control_scale * np.asarray(raw),
                       self.control_low, self.control_high)

    # -- training -------------------------------------------------------------
    def loss(self, P: dict, batch: dict, rng=None) -> ad.Tensor:
        raise NotImplementedError


def _listify(a):
    return [None if not np.isfinite(v) else float(v) for v in a]


def _limits(a, m, fill):
    if a is None:
        return np.full(m, fill)
    return np.array([fill if v is None else v for v in np.asarray(a, dtype=object).ravel()], float)


class FNNPolicy(Policy):
    """Reactive policy ``u = W2 tanh(W1 x + b1) + b2``."""

    kind = "fnn"

    def layout(self):
        n, h, m = self.obs_dim, self.hidden, self.control_dim
        return [("W1", (h, n), n), ("b1", (h,), n), ("W2", (m, h), h), ("b2", (m,), h)]

    def forward(self, P, obs):
        hid = ad.tanh(ad.affine(P["W1"], obs, P["b1"]))
        return ad.affine(P["W2"], hid, P["b2"])

    def start(self, batch: int):
        return None

    def act(self, obs, state=None):
        raw = self.forward(self.tensors(), ad.Tensor(obs)).data
        return self.emit(raw), None

    def loss(self, P, batch, rng=None):
        return mse(self.forward(P, ad.Tensor(batch["obs"])), self.normalise(batch["target"]))


class RNNPolicy(Policy):
    """State-sequence policy ``h' = tanh(Wh h + Wx x + b)``, ``u = Wo h' + bo``.

    ``truncate`` limits backpropagation through time to windows of that many
    steps (None means the full episode).
    """

    kind = "rnn"

    def __init__(self, *args, truncate: int | None = None, **kwargs):
        self.truncate = truncate
        super().__init__(*args, **kwargs)

    def config(self):
        return dict(super().config(), truncate=self.truncate)

    def layout(self):
        n, h, m = self.obs_dim, self.hidden, self.control_dim
        return [("Wx", (h, n), n + h), ("Wh", (h, h), n + h), ("b", (h,), n + h),
                ("Wo", (m, h), h), ("bo", (m,), h)]

    def cell(self, P, x, h):
        return ad.tanh(ad.add(ad.affine(P["Wx"], x), ad.affine(P["Wh"], h, P["b"])))

    def start(self, batch: int):
        return np.zeros((batch, self.hidden))

    def act(self, obs, state):
        P = self.tensors()
        h = self.cell(P, ad.Tensor(obs), ad.Tensor(state))
        raw = ad.affine(P["Wo"], h, P["bo"]).data
        return self.emit(raw), np.array(h.data)

    def loss(self, P, batch, rng=None):
        obs = batch["obs"]                  # [B, T, n]
        target = self.normalise(batch["target"])
        mask = batch.get("mask")
        B, T, _ = obs.shape
        if mask is None:
            mask = np.ones((B, T))
        h = ad.Tensor(np.zeros((B, self.hidden)))
        total = None
        for t in range(T):
            if self.truncate and t % self.truncate == 0:
                h = ad.Tensor(h.data)
            h = self.cell(P, ad.Tensor(obs[:, t]), h)
            diff = ad.add(ad.affine(P["Wo"], h, P["bo"]), ad.Tensor(-target[:, t]))
            w = np.repeat(mask[:, t:t + 1], self.control_dim, axis=1)
            term = ad.reduce_sum(ad.mul(ad.mul(diff, diff), ad.Tensor(w)))
            total = term if total is None else ad.add(total, term)
        return ad.scale(total, 1.0 / max(1.0, mask.sum() * self.control_dim))


class SequencePolicy(Policy):
    """Base for MPC-style policies mapping (state, warm sequence) to a sequence."""

    sequence = True

    def forward(self, P, obs, warm_norm, noise=None):
        raise NotImplementedError

    def plan(self, obs, warm, rngs=None):
        raw = self.forward(self.tensors(), ad.Tensor(obs), ad.Tensor(self.normalise(warm))).data
        return self.emit(raw)

    def loss(self, P, batch, rng=None):
        pred = self.forward(P, ad.Tensor(batch["obs"]), ad.Tensor(self.normalise(batch["warm"])))
        return mse(pred, self.normalise(batch["target"]))


class MPCFNNPolicy(SequencePolicy):
    """FNN over ``[x || warm]`` emitting the whole H x m sequence."""

    kind = "mpc-fnn"

    def layout(self):
        n, h, m, H = self.obs_dim, self.hidden, self.control_dim, self.horizon
        d_in = n + H * m
        return [("W1", (h, d_in), d_in), ("b1", (h,), d_in),
                ("W2", (H * m, h), h), ("b2", (H * m,), h)]

    def forward(self, P, obs, warm_norm, noise=None):
        lead = obs.shape[:-1]
        H, m = self.horizon, self.control_dim
        if warm_norm.shape != lead + (H, m):
            raise ad.ShapeError(f"mpc-fnn: warm shape {warm_norm.shape} != {lead + (H, m)}")
        inp = ad.concat([obs, ad.reshape(warm_norm, lead + (H * m,))], axis=-1)
        out = ad.affine(P["W2"], ad.tanh(ad.affine(P["W1"], inp, P["b1"])), P["b2"])
        return ad.reshape(out, lead + (H, m))


class MPCRNNPolicy(SequencePolicy):
    """Recurrent planner: ``h0 = We x + be``, then one cell per warm control.

    ``h_{t+1} = tanh(Wh h_t + Wu warm_t + b)`` and ``u_t = Wo h_{t+1} + bo``.
    """

    kind = "mpc-rnn"

    def layout(self):
        n, h, m = self.obs_dim, self.hidden, self.control_dim
        return [("We", (h, n), n), ("be", (h,), n),
                ("Wh", (h, h), h + m), ("Wu", (h, m), h + m), ("b", (h,), h + m),
                ("Wo", (m, h), h), ("bo", (m,), h)]

    def forward(self, P, obs, warm_norm, noise=None):
        lead = obs.shape[:-1]
        H, m = self.horizon, self.control_dim
        if warm_norm.shape != lead + (H, m):
            raise ad.ShapeError(f"mpc-rnn: warm shape {warm_norm.shape} != {lead + (H, m)}")
        h = ad.affine(P["We"], obs, P["be"])
        outs = []
        for t in range(H):
            ut = ad.slice_(warm_norm, (Ellipsis, t, slice(None)))
            h = ad.tanh(ad.add(ad.affine(P["Wh"], h), ad.affine(P["Wu"], ut, P["b"])))
            outs.append(ad.reshape(ad.affine(P["Wo"], h, P["bo"]), lead + (1, m)))
        return outs[0] if H == 1 else ad.concat(outs, axis=-2)


# functional entry points ---------------------------------------

def fnn_act(x, policy: FNNPolicy):
    return policy.act(x)[0]


def rnn_act(state_history, policy: RNNPolicy, h):
    """Consume the newest state of ``state_history``; the carried ``h`` holds the rest."""
    if len(state_history) == 0:
        raise ValueError("rnn_act needs a non-empty state history")
    return policy.act(np.asarray(state_history[-1]), h)


def mpc_fnn_plan(x, warm, policy: MPCFNNPolicy):
    return policy.plan(x, warm)


def mpc_rnn_plan(x, warm, policy: MPCRNNPolicy):
    return policy.plan(x, warm)


POLICY_CLASSES = {cls.kind: cls for cls in (FNNPolicy, RNNPolicy, MPCFNNPolicy, MPCRNNPolicy)}


def count_params(kind: str, obs_dim: int, control_dim: int, hidden: int, horizon: int) -> int:
    n, m, h, H = obs_dim, control_dim, hidden, horizon
    if kind == "fnn":
        return h * (n + 1) + m * (h + 1)
    if kind == "rnn":
        return h * (n + h + 1) + m * (h + 1)
    if kind == "mpc-fnn":
        return h * (n + H * m + 1) + H * m * (h + 1)
    if kind == "mpc-rnn":
        return h * (n + 1) + h * (h + m + 1) + m * (h + 1)
    if kind == "pinet":
        # dynamics cell over [h || u] plus cost FNN over [h || u] -> scalar
        return h * (h + m + 1) + h * (h + m + 1) + (h + 1)
    raise ValueError(f"unknown policy kind {kind!r}")


def hidden_for_budget(kind: str, obs_dim: int, control_dim: int, horizon: int,
                      budget: int) -> int:
    """Hidden width whose parameter count is closest to ``budget``."""
    best, best_gap = 1, None
    h = 1
    while True:
        c = count_params(kind, obs_dim, control_dim, h, horizon)
        gap = abs(c - budget)
        if best_gap is None or gap < best_gap:
            best, best_gap = h, gap
        if c > budget:
            return best
        h += 1


def make_policy(kind: str, task, horizon: int = 20, hidden: int | None = None,
                rng=None, **extra) -> Policy:
    """Build a policy for ``task``.  Without ``hidden`` the width is matched to
    the PI-Net parameter count so all kinds carry a comparable budget."""
    if kind == "pinet":
        from .pinet import PiNet
        return PiNet.for_task(task, horizon=horizon, rng=rng, **extra)
    if hidden is None:
        budget = count_params("pinet", task.obs_dim, task.control_dim, 64, horizon)
        hidden = hidden_for_budget(kind, task.obs_dim, task.control_dim, horizon, budget)
    cls = POLICY_CLASSES[kind]
    return cls(task.obs_dim, task.control_dim, hidden=hidden,
               horizon=horizon if cls.sequence else 1,
               control_offset=task.control_offset, control_scale=task.control_scale,
               control_low=task.control_low, control_high=task.control_high, rng=rng, **extra)
