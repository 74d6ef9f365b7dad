"""Vanilla DAgger and DAgger for MPC policies, with aggregated datasets.

Data collection runs a batch of episodes in lockstep.  At every step both the
expert and the learner are queried, a fresh uniform draw per episode decides
which of the two controls is applied (expert iff ``draw < beta``), and one
record per episode is appended.  In MPC mode both sides keep their own warm
start, shifted by one step after every query.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .envs import is_failure
from .mppi import MPPIExpert, shift_warm_start
from .optim import Adam
from .rollout import episode_rngs, run_episodes

log = logging.getLogger(__name__)

DEFAULT_BETAS = (1.0, 0.8, 0.7, 0.6, 0.5, 0.45, 0.4, 0.35, 0.30, 0.25, 0.2, 0.18, 0.16,
               0.14, 0.12, 0.10, 0.08, 0.06, 0.04, 0.02, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class BetaSchedule:
    values: tuple = DEFAULT_BETAS

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(b) for b in self.values))
        if not self.values:
            raise ValueError("beta schedule is empty")
        if any(not 0.0 <= b <= 1.0 for b in self.values):
            raise ValueError("beta values must lie in [0, 1]")

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i: int) -> float:
        """Beta for 1-based iteration ``i``; iterations past the end reuse the last value."""
        if i < 1:
            raise IndexError("iterations are numbered from 1")
        return self.values[min(i, len(self.values)) - 1]

    def running_means(self) -> np.ndarray:
        v = np.asarray(self.values)
        return np.cumsum(v) / np.arange(1, len(v) + 1)


@dataclass(frozen=True)
class Record:
    iteration: int
    episode: int
    timestep: int
    state: tuple
    obs: tuple
    target: tuple               # expert control (vanilla) or flattened H x m sequence
    warm: tuple | None = None   # learner's input sequence, MPC mode only
    learner_output: tuple | None = None
    expert_applied: bool = True

    def to_json(self) -> str:
        return json.dumps({k: getattr(self, k) for k in self.__dataclass_fields__},
                          separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> Record:
        d = json.loads(line)
        for k in ("state", "obs", "target", "warm", "learner_output"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class Dataset:
    """Append-only aggregate of DAgger records."""

    horizon: int | None = None
    control_dim: int = 1
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def extend(self, new) -> None:
        self.records.extend(new)

    def iteration(self, i: int) -> list:
        return [r for r in self.records if r.iteration == i]

    def episodes(self):
        """Records grouped by (iteration, episode), each sorted by timestep."""
        groups: dict = {}
        for r in self.records:
            groups.setdefault((r.iteration, r.episode), []).append(r)
        return {k: sorted(v, key=lambda r: r.timestep) for k, v in sorted(groups.items())}

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(json.dumps({"horizon": self.horizon, "control_dim": self.control_dim})
                     + "\n")
            for r in self.records:
                fh.write(r.to_json() + "\n")
        return path

    @classmethod
    def load(cls, path) -> Dataset:
        with open(path) as fh:
            head = json.loads(fh.readline())
            recs = [Record.from_json(line) for line in fh if line.strip()]
        return cls(head["horizon"], head["control_dim"], recs)

    # -- training arrays ---------------------------------------------------
    def arrays(self) -> dict:
        obs = np.array([r.obs for r in self.records])
        target = np.array([r.target for r in self.records])
        out = {"obs": obs}
        if self.horizon is None:
            out["target"] = target
        else:
            H, m = self.horizon, self.control_dim
            out["target"] = target.reshape(-1, H, m)
            out["warm"] = np.array([r.warm for r in self.records]).reshape(-1, H, m)
        return out

    def sequences(self) -> dict:
        """Episode-major padded arrays for BPTT: obs [E, T, n], target [E, T, m], mask [E, T]."""
        eps = list(self.episodes().values())
        T = max(len(e) for e in eps)
        n = len(eps[0][0].obs)
        m = len(eps[0][0].target)
        obs = np.zeros((len(eps), T, n))
        target = np.zeros((len(eps), T, m))
        mask = np.zeros((len(eps), T))
        for i, e in enumerate(eps):
            obs[i, :len(e)] = [r.obs for r in e]
            target[i, :len(e)] = [r.target for r in e]
            mask[i, :len(e)] = 1.0
        return {"obs": obs, "target": target, "mask": mask}


def _tup(a):
    return tuple(float(v) for v in np.ravel(a))


def _collect(i, learner, expert: MPPIExpert, task, beta, n_episodes, steps, seed, mpc: bool):
    """Run one iteration's episodes in lockstep; returns the new records."""
    streams = [episode_rngs(seed, e, iteration=i) for e in range(n_episodes)]
    B, H, m = n_episodes, expert.horizon, task.control_dim
    x = np.stack([task.sample_initial_state(s["init"]) for s in streams])
    exp_warm = np.zeros((B, H, m))
    if mpc:
        if learner.horizon != H:
            raise ValueError(f"learner horizon {learner.horizon} != expert horizon {H}")
        lrn_warm = np.zeros((B, H, m))
    else:
        lrn_state = learner.start(B)
    alive = np.arange(B)
    records = []
    for t in range(steps):
        if alive.size == 0:
            break
        xa = x[alive]
        obs = task.observe(xa)
        exp_seq = expert.plan(xa, exp_warm[alive], [streams[e]["expert"] for e in alive])
        if mpc:
            lrn_seq = learner.plan(obs, lrn_warm[alive], [streams[e]["learner"] for e in alive])
            lrn_u = lrn_seq[:, 0]
        else:
            lrn_u, new_state = learner.act(obs, None if lrn_state is None else lrn_state[alive])
            if lrn_state is not None:
                lrn_state[alive] = new_state
        draws = np.array([streams[e]["mix"].random() for e in alive])
        use_expert = draws < beta
        applied = np.where(use_expert[:, None], exp_seq[:, 0], lrn_u)
        for j, e in enumerate(alive):
            if mpc:
                records.append(Record(i, int(e), t, _tup(xa[j]), _tup(obs[j]), _tup(exp_seq[j]),
                                      _tup(lrn_warm[e]), _tup(lrn_seq[j]), bool(use_expert[j])))
            else:
                records.append(Record(i, int(e), t, _tup(xa[j]), _tup(obs[j]),
                                      _tup(exp_seq[j, 0]), expert_applied=bool(use_expert[j])))
        exp_warm[alive] = shift_warm_start(exp_seq)
        if mpc:
            lrn_warm[alive] = shift_warm_start(lrn_seq)
        nxt = task.step(xa, applied, [streams[e]["env"] for e in alive], check=False)
        ok = np.all(np.isfinite(nxt), axis=1)
        x[alive[ok]] = nxt[ok]
        if not ok.all():
            log.info("iteration %d: %d episode(s) diverged at step %d", i, int((~ok).sum()), t)
        alive = alive[ok]
    return records


def vanilla_dagger_iteration(i, learner, expert, task, schedule: BetaSchedule, D: Dataset,
                             n_episodes=64, steps=None, seed=0) -> Dataset:
    if learner.kind not in ("fnn", "rnn"):
        raise ValueError(f"vanilla DAgger needs an fnn or rnn learner, got {learner.kind}")
    steps = task.train_steps if steps is None else steps
    D.extend(_collect(i, learner, expert, task, schedule[i], n_episodes, steps, seed, mpc=False))
    return D


def mpc_dagger_iteration(i, learner, expert, task, schedule: BetaSchedule, D: Dataset,
                         n_episodes=64, steps=None, seed=0) -> Dataset:
    if not getattr(learner, "sequence", False):
        raise ValueError(f"MPC-DAgger needs a sequence learner, got {learner.kind}")
    steps = task.train_steps if steps is None else steps
    D.extend(_collect(i, learner, expert, task, schedule[i], n_episodes, steps, seed, mpc=True))
    return D


class TrainingError(RuntimeError):
    pass


def train_policy(D: Dataset, policy, epochs: int, rng, batch_size: int = 64,
                 lr: float = 1e-3, history: list | None = None, max_failures: int = 3,
                 lr_floor: float = 0.1):
    """Minibatch Adam on the aggregated dataset; returns a new policy object.

    The step size decays as ``lr / (1 + k * epoch)`` with ``k`` chosen so the
    last epoch runs at ``lr_floor * lr``; this keeps the late-epoch loss from
    drifting upwards once it reaches the minibatch noise floor.
    ``history`` (if given) receives the mean training loss of every epoch.
    A non-finite loss halves the learning rate and restarts the epoch.
    """
    new = policy.copy()
    if epochs <= 0:
        return new
    if len(D) == 0:
        raise ValueError("cannot train on an empty dataset")
    data = D.sequences() if policy.kind == "rnn" else D.arrays()
    N = len(next(iter(data.values())))
    params = {k: v.copy() for k, v in new.params.items()}
    opt = Adam(params, lr=lr)
    decay = (1.0 / lr_floor - 1.0) / max(1, epochs - 1)
    failures = 0
    epoch = 0
    while epoch < epochs:
        opt.lr = lr / (1.0 + decay * epoch)
        start_params = {k: v.copy() for k, v in params.items()}
        order = rng.permutation(N)
        losses = []
        try:
            for s in range(0, N, batch_size):
                idx = order[s:s + batch_size]
                batch = {k: v[idx] for k, v in data.items()}
                tape = ad.Tape()
                new.set_params(params)
                P = new.tensors(tape)
                loss = new.loss(P, batch, rng=rng)
                grads = tape.backward(loss)
                params = opt.step(params, {k: grads[P[k]] for k in params})
                losses.append(loss.item())
                if not all(np.all(np.isfinite(v)) for v in params.values()):
                    raise ad.NumericError("parameters became non-finite")
        except ad.NumericError as err:
            failures += 1
            if failures >= max_failures:
                raise TrainingError(f"training diverged {failures} times: {err}") from err
            lr *= 0.5
            params = start_params
            log.warning("non-finite loss in epoch %d; learning rate -> %g", epoch, lr)
            continue
        if history is not None:
            history.append(float(np.mean(losses)))
        epoch += 1
    new.set_params(params)
    return new


def evaluate_policies(policies, task, episodes: int, seed: int, steps: int | None = None):
    """(success rate, mean success cost) for each policy under beta = 0."""
    steps = task.test_steps if steps is None else steps
    out = []
    for p in policies:
        costs = run_episodes(p, task, episodes, steps, seed).costs
        ok = np.array([not is_failure(c) for c in costs])
        out.append((float(ok.mean()), float(costs[ok].mean()) if ok.any() else float("inf")))
    return out


def select_best(policies, task, episodes: int = 32, seed: int = 0, steps: int | None = None,
                scores=None):
    """Highest validation success rate; ties -> lower mean cost, then later iteration."""
    if not policies:
        raise ValueError("no policies to select from")
    if len(policies) == 1:
        return policies[0]
    scores = scores if scores is not None else evaluate_policies(policies, task, episodes, seed, steps)
    best = max(range(len(policies)), key=lambda i: (scores[i][0], -scores[i][1], i))
    return policies[best]


@dataclass
class DaggerResult:
    policies: list
    dataset: Dataset
    losses: list
    best: object = None
    scores: list | None = None


def run_dagger(learner, expert, task, iterations: int, schedule: BetaSchedule | None = None,
               n_episodes: int = 64, steps: int | None = None, epochs: int = 500,
               batch_size: int = 64, lr: float = 1e-3, seed: int = 0,
               validation_episodes: int = 32, validation_seed: int = 10_000,
               on_iteration=None) -> DaggerResult:
    """N iterations of collect -> aggregate -> retrain, then best-policy selection.

    ``policies[i]`` is the learner trained after iteration ``i + 1``.  Training
    continues from the previous iteration's parameters.
    """
    schedule = schedule or BetaSchedule()
    mpc = getattr(learner, "sequence", False)
    D = Dataset(horizon=learner.horizon if mpc else None, control_dim=task.control_dim)
    train_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1 << 20,)))
    policies, losses = [], []
    current = learner
    for i in range(1, iterations + 1):
        step_fn = mpc_dagger_iteration if mpc else vanilla_dagger_iteration
        step_fn(i, current, expert, task, schedule, D, n_episodes=n_episodes, steps=steps, seed=seed)
        hist: list = []
        current = train_policy(D, current, epochs, train_rng, batch_size=batch_size, lr=lr,
                               history=hist)
        policies.append(current)
        losses.append(hist)
        log.info("iteration %d: beta=%.2f |D|=%d final loss %.4g", i, schedule[i], len(D),
                 hist[-1] if hist else float("nan"))
        if on_iteration is not None:
            on_iteration(i, current, D, hist)
    scores = None
    if len(policies) > 1 and validation_episodes > 0:
        scores = evaluate_policies(policies, task, validation_episodes, validation_seed)
    best = select_best(policies, task, validation_episodes, validation_seed, scores=scores)
    return DaggerResult(policies, D, losses, best, scores)
