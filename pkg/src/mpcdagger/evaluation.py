"""Success/cost metrics, robustness sweeps and report files."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .envs import FAILURE_COST
from .rollout import run_episodes

THREADS_ENV = "MPCDAGGER_THREADS"
CSV_COLUMNS = ("task", "params", "policy", "trials", "successes", "success_pct",
               "mean_cost", "std_cost")


@dataclass(frozen=True)
class Metrics:
    trials: int
    successes: int
    mean_cost: float | None
    std_cost: float | None

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @property
    def success_pct(self) -> float:
        return 100.0 * self.successes / self.trials


def compute_metrics(trials) -> Metrics:
    """Success iff cost <= 100; cost statistics over successful trials only.

    ``trials`` holds either bare costs or ``(trajectory, cost)`` pairs.
    """
    costs = [t[1] if isinstance(t, tuple) else t for t in trials]
    if not costs:
        raise ValueError("need at least one trial")
    costs = np.asarray(costs, float)
    ok = np.isfinite(costs) & (costs <= FAILURE_COST)
    if not ok.any():
        return Metrics(len(costs), 0, None, None)
    good = costs[ok]
    return Metrics(len(costs), int(ok.sum()), float(good.mean()), float(good.std()))


@dataclass(frozen=True)
class SweepRow:
    task: str
    params: str          # "baseline" or "name=value"
    policy: str
    metrics: Metrics


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)


def _label(param: str, value: float, baseline: float) -> str:
    return "baseline" if np.isclose(value, baseline) else f"{param}={value!r}"


def grid_points(config, task=None) -> list:
    """Deduplicated (label, overrides) pairs with the baseline first."""
    task = task or config.build_task()
    points = [("baseline", {})]
    seen = {"baseline"}
    for ax in config.sweep:
        base = getattr(task.params, ax.param)
        for v in ax.values:
            label = _label(ax.param, float(v), base)
            if label not in seen:
                seen.add(label)
                points.append((label, {ax.param: float(v)}))
    return points


def evaluate(controller, task, trials: int, steps: int, seed: int, batch_size: int = 128) -> Metrics:
    res = run_episodes(controller, task, trials, steps, seed, batch_size=batch_size)
    return compute_metrics(list(res.costs))


def run_sweep(config, controller, policy_name: str | None = None,
              points: list | None = None, threads: int | None = None) -> SweepResult:
    """Evaluate ``controller`` (a policy, the expert, or a checkpoint path) at every grid point.

    ``controller == "expert"`` evaluates a fresh MPPI expert built on each
    perturbed task.  Every grid point reuses the same per-trial seeds.
    """
    from .checkpoint import load_checkpoint
    is_expert = isinstance(controller, str) and controller == "expert"
    if isinstance(controller, (str, os.PathLike)) and not is_expert:
        controller = load_checkpoint(Path(controller))
    name = policy_name or ("expert" if is_expert else controller.kind)
    base_task = config.build_task()
    points = points if points is not None else grid_points(config, base_task)
    steps = config.eval.steps or base_task.test_steps

    def one(point):
        label, over = point
        task = config.build_task(**over)
        ctrl = config.build_expert(task) if is_expert else controller
        return SweepRow(config.task, label, name,
                        evaluate(ctrl, task, config.eval.trials, steps, config.eval.seed,
                                 config.eval.batch_size))

    threads = threads or int(os.environ.get(THREADS_ENV, "1"))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, points))
    else:
        rows = [one(p) for p in points]
    seeds = {"config_seed": config.seed, "eval_seed": config.eval.seed,
             "trial_seeds": f"SeedSequence({config.eval.seed}, spawn_key=(0, trial, stream))"}
    notes = {"success_threshold": FAILURE_COST,
             "noise_std_perturbation": "absolute stddev; the +0.9 row is baseline + 0.9"}
    return SweepResult(rows, config.to_dict(), seeds, notes)


# -- reports ------------------------------------------------------------------
def _fmt(v):
    return "" if v is None else repr(float(v))


def table_text(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.rows:
        m = r.metrics
        w.writerow([r.task, r.params, r.policy, m.trials, m.successes,
                    _fmt(m.success_pct), _fmt(m.mean_cost), _fmt(m.std_cost)])
    return buf.getvalue()


def summary_dict(result: SweepResult) -> dict:
    rows = [dict(task=r.task, params=r.params, policy=r.policy, success_pct=r.metrics.success_pct,
                 **asdict(r.metrics)) for r in result.rows]
    return {"config": result.config, "seeds": result.seeds, "notes": result.notes, "rows": rows}


def emit_report(result: SweepResult, out_dir, stem: str = "report") -> tuple[Path, Path]:
    """Write ``<stem>.csv`` and ``<stem>.json``; both are deterministic for a fixed result."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    csv_path.write_text(table_text(result))
    json_path.write_text(json.dumps(summary_dict(result), sort_keys=True, indent=2) + "\n")
    return csv_path, json_path


def parse_table(text: str) -> list:
    """Inverse of :func:`table_text`: rows back as :class:`SweepRow`."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    rows = []
    for d in reader:
        opt = lambda s: None if s == "" else float(s)  # noqa: E731
        rows.append(SweepRow(d["task"], d["params"], d["policy"],
                             Metrics(int(d["trials"]), int(d["successes"]),
                                     opt(d["mean_cost"]), opt(d["std_cost"]))))
    return rows
