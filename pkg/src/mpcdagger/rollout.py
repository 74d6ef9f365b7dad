"""Batched closed-loop episodes for policies and the MPPI expert."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mppi import MPPIExpert, shift_warm_start

# purpose tags for independent per-episode random streams
STREAMS = ("init", "env", "mix", "expert", "learner")


def episode_rngs(seed: int, episode: int, iteration: int = 0) -> dict:
    """Independent generators for one episode, keyed by (seed, iteration, episode)."""
    return {name: np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(iteration, episode, k)))
            for k, name in enumerate(STREAMS)}


class Runner:
    """Closed-loop controller state for a batch of episodes.

    Wraps either a learned :class:`~mpcdagger.policies.Policy` or an
    :class:`MPPIExpert`; MPC-style controllers keep their own shifted warm start.
    """

    def __init__(self, controller, task):
        self.controller = controller
        self.task = task
        self.is_expert = isinstance(controller, MPPIExpert)
        self.sequence = self.is_expert or getattr(controller, "sequence", False)

    def reset(self, batch: int):
        if self.sequence:
            H = self.controller.horizon
            self.warm = np.zeros((batch, H, self.task.control_dim))
            self.state = None
        else:
            self.state = self.controller.start(batch)

    def __call__(self, x, rngs):
        if self.is_expert:
            seq = self.controller.plan(x, self.warm, rngs)
        elif self.sequence:
            seq = self.controller.plan(self.task.observe(x), self.warm, rngs)
        else:
            u, self.state = self.controller.act(self.task.observe(x), self.state)
            return u
        self.warm = shift_warm_start(seq)
        return seq[:, 0]


@dataclass
class EpisodeResults:
    trajectories: np.ndarray     # [N, T, n]; rows after divergence are NaN
    costs: np.ndarray            # [N]
    initial_states: np.ndarray   # [N, n]


def run_episodes(controller, task, n_episodes: int, steps: int, seed: int,
                 batch_size: int = 128) -> EpisodeResults:
    """Run ``n_episodes`` closed-loop episodes of ``steps`` on ``task``.

    Episode ``e`` always uses the streams of ``episode_rngs(seed, e)`` so the
    results do not depend on ``batch_size``.
    """
    trajs, x0s = [], []
    for start in range(0, n_episodes, batch_size):
        ids = range(start, min(n_episodes, start + batch_size))
        streams = [episode_rngs(seed, e) for e in ids]
        t, x0 = _run_batch(controller, task, streams, steps)
        trajs.append(t)
        x0s.append(x0)
    traj = np.concatenate(trajs)
    costs = np.array([task.task_cost(tr) for tr in traj])
    return EpisodeResults(traj, costs, np.concatenate(x0s))


def _run_batch(controller, task, streams, steps):
    B = len(streams)
    runner = Runner(controller, task)
    runner.reset(B)
    x = np.stack([task.sample_initial_state(s["init"]) for s in streams])
    x0 = x.copy()
    alive = np.ones(B, bool)
    traj = np.full((B, steps, task.state_dim), np.nan)
    for t in range(steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        plan_rngs = [streams[i]["expert" if runner.is_expert else "learner"] for i in idx]
        full_u = np.zeros((B, task.control_dim))
        if idx.size == B:
            full_u = runner(x, plan_rngs)
        else:
            full_u[idx] = _masked_call(runner, x, idx, plan_rngs, B)
        env_rngs = [streams[i]["env"] for i in idx]
        nxt = task.step(x[idx], full_u[idx], env_rngs, check=False)
        ok = np.all(np.isfinite(nxt), axis=1)
        x[idx] = np.where(ok[:, None], nxt, x[idx])
        traj[idx[ok], t] = nxt[ok]
        alive[idx[~ok]] = False
    return traj, x0


def _masked_call(runner, x, idx, rngs, B):
    """Advance only the live rows while keeping the runner's batch state aligned."""
    saved_warm = getattr(runner, "warm", None)
    saved_state = runner.state
    if saved_warm is not None:
        runner.warm = saved_warm[idx]
    if saved_state is not None:
        runner.state = saved_state[idx]
    u = runner(x[idx], rngs)
    if saved_warm is not None:
        saved_warm = saved_warm.copy()
        saved_warm[idx] = runner.warm
        runner.warm = saved_warm
    if saved_state is not None:
        saved_state = saved_state.copy()
        saved_state[idx] = runner.state
        runner.state = saved_state
    return u
