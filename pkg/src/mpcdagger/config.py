"""Experiment configuration loaded from TOML.

Every section maps onto a dataclass; unknown keys anywhere are rejected so a
typo never silently falls back to a default.  Example::

    task = "cartpole"
    policy = "mpc-rnn"
    seed = 3
    output_dir = "runs/cartpole-mpc-rnn"

    [env]
    pole_length = 0.5

    [dagger]
    iterations = 10
    episodes = 16

    [[sweep]]
    param = "pole_length"
    values = [0.5, 0.7]
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dagger import DEFAULT_BETAS, BetaSchedule
from .envs import TASKS, make_task
from .pinet import DEFAULT_MEMORY_BUDGET, ConfigError
from .policies import KINDS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class MPPISection:
    """Overrides for the expert; None keeps the per-task default."""
    K: int = 100
    H: int = 20
    lam: float | None = None
    nu: float = 1.5
    sigma: float | None = None
    passes: int = 1


@dataclass
class PiNetSection:
    hidden: int = 64
    K: int = 100
    U: int = 1
    lam: float = 1.0
    nu: float = 1.5
    sigma: float | None = None
    memory_budget: int = DEFAULT_MEMORY_BUDGET


@dataclass
class DaggerSection:
    iterations: int = 23
    episodes: int = 64
    steps: int | None = None          # None -> task training length
    epochs: int | None = None         # None -> 500 (100 for pinet)
    batch_size: int = 64
    lr: float = 1e-3
    betas: list = field(default_factory=lambda: list(DEFAULT_BETAS))
    expert_only: bool = False         # beta = 1 for every iteration
    validation_episodes: int = 32
    validation_seed: int = 10_000
    hidden: int | None = None         # None -> parameter count matched to PI-Net


@dataclass
class EvalSection:
    trials: int = 128
    steps: int | None = None          # None -> task test length
    seed: int = 20_000
    batch_size: int = 128


@dataclass
class SweepAxis:
    param: str
    values: list


@dataclass
class ExperimentConfig:
    task: str = "cartpole"
    policy: str = "mpc-rnn"
    seed: int = 0
    output_dir: str = "runs/default"
    substeps: int | None = None
    env: dict = field(default_factory=dict)
    mppi: MPPISection = field(default_factory=MPPISection)
    pinet: PiNetSection = field(default_factory=PiNetSection)
    dagger: DaggerSection = field(default_factory=DaggerSection)
    eval: EvalSection = field(default_factory=EvalSection)
    sweep: list = field(default_factory=list)

    def __post_init__(self):
        if not self.sweep:
            self.sweep = default_grid(self.task)
        self.validate()

    # -- validation -----------------------------------------------------------
    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.policy not in KINDS:
            raise ConfigError(f"policy must be one of {KINDS}, got {self.policy!r}")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an explicit integer")
        names = make_task(self.task).param_names()
        for key in self.env:
            if key not in names:
                raise ConfigError(f"[env] {key!r} is not a parameter of {self.task}; "
                                  f"known: {', '.join(names)}")
        for ax in self.sweep:
            if ax.param not in names:
                raise ConfigError(f"sweep parameter {ax.param!r} is not a parameter of {self.task}")
            if not ax.values:
                raise ConfigError(f"sweep axis {ax.param!r} has no values")
        try:
            BetaSchedule(tuple(self.dagger.betas))
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if self.dagger.iterations < 1 or self.dagger.episodes < 1:
            raise ConfigError("dagger.iterations and dagger.episodes must be >= 1")
        if self.eval.trials < 1:
            raise ConfigError("eval.trials must be >= 1")
        if self.policy == "pinet":
            self.build_policy()          # raises ConfigError on memory or width problems

    # -- builders ---------------------------------------------------------------
    def build_task(self, **overrides):
        return make_task(self.task, substeps=self.substeps, **dict(self.env, **overrides))

    def build_expert(self, task=None):
        from .mppi import MPPIExpert, default_mppi_config
        task = task or self.build_task()
        over = {k: v for k, v in dataclasses.asdict(self.mppi).items() if v is not None}
        return MPPIExpert(task, default_mppi_config(task, **over))

    def build_policy(self, task=None, rng=None):
        from .policies import make_policy
        task = task or self.build_task()
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(1 << 21,))) \
            if rng is None else rng
        if self.policy == "pinet":
            extra = {k: v for k, v in dataclasses.asdict(self.pinet).items() if v is not None}
            return make_policy("pinet", task, horizon=self.mppi.H, rng=rng,
                               batch_size=self.dagger.batch_size, **extra)
        return make_policy(self.policy, task, horizon=self.mppi.H, hidden=self.dagger.hidden,
                           rng=rng)

    def schedule(self) -> BetaSchedule:
        if self.dagger.expert_only:
            return BetaSchedule((1.0,))
        return BetaSchedule(tuple(self.dagger.betas))

    def epochs(self) -> int:
        if self.dagger.epochs is not None:
            return self.dagger.epochs
        return 100 if self.policy == "pinet" else 500

    # -- identity -------------------------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _grid(lo, hi, step):
    n = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(n + 1)]


def default_grid(task: str) -> list:
    """Baseline-relative perturbations plus the swept parameter ranges."""
    if task == "cartpole":
        return [SweepAxis("cart_mass", [1.0, 1.2]),
                SweepAxis("pole_length", _grid(0.3, 0.8, 0.05))]
    return [SweepAxis("noise_std", [0.1, 1.0]),
            SweepAxis("init_offset", [0.0, 0.5]),
            SweepAxis("arm_length", [0.35, 0.175]),
            SweepAxis("mass", sorted(set([0.7] + _grid(1.0, 1.5, 0.05))))]


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'top level'}: {', '.join(unknown)}")
    return data


def from_dict(data: dict) -> ExperimentConfig:
    data = dict(_build(ExperimentConfig, data, ""))
    sections = {"mppi": MPPISection, "pinet": PiNetSection, "dagger": DaggerSection,
                "eval": EvalSection}
    for name, cls in sections.items():
        if name in data:
            data[name] = cls(**_build(cls, data[name], f"[{name}]"))
    if "env" in data and not isinstance(data["env"], dict):
        raise ConfigError("[env] must be a table")
    if "sweep" in data:
        axes = data["sweep"]
        if not isinstance(axes, list):
            raise ConfigError("sweep must be an array of tables ([[sweep]])")
        data["sweep"] = [SweepAxis(**_build(SweepAxis, a, "[[sweep]]")) for a in axes]
    try:
        return ExperimentConfig(**data)
    except TypeError as err:
        raise ConfigError(str(err)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config not found: {path}")
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"{path}: {err}") from None
    return from_dict(data)
