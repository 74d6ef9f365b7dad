"""Command-line driver: train, eval, sweep, expert-demo, grad-check."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .dagger import run_dagger
from .evaluation import SweepResult, SweepRow, emit_report, evaluate, run_sweep

log = logging.getLogger("mpcdagger")


def _manifest(cfg, cfg_path, extra=None) -> dict:
    return {"config_path": str(cfg_path), "config_sha256": cfg.digest(),
            "seeds": {"seed": cfg.seed, "validation_seed": cfg.dagger.validation_seed,
                      "eval_seed": cfg.eval.seed},
            **(extra or {})}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.output_dir or cfg.output_dir)
    task = cfg.build_task()
    expert = cfg.build_expert(task)
    learner = cfg.build_policy(task)
    ckpt_dir = out / "checkpoints"

    def on_iteration(i, policy, D, hist):
        save_checkpoint(ckpt_dir / f"iter_{i:02d}.ckpt", policy,
                        extra={"iteration": i, "records": len(D)})

    res = run_dagger(learner, expert, task, cfg.dagger.iterations, cfg.schedule(),
                     n_episodes=cfg.dagger.episodes, steps=cfg.dagger.steps,
                     epochs=cfg.epochs(), batch_size=cfg.dagger.batch_size, lr=cfg.dagger.lr,
                     seed=cfg.seed, validation_episodes=cfg.dagger.validation_episodes,
                     validation_seed=cfg.dagger.validation_seed, on_iteration=on_iteration)
    best_i = next(i for i, p in enumerate(res.policies) if p is res.best) + 1
    save_checkpoint(out / "best.ckpt", res.best, extra={"iteration": best_i})
    res.dataset.save(out / "dataset.jsonl")
    _write_json(out / "losses.json", res.losses)
    _write_json(out / "manifest.json", _manifest(cfg, args.config, {
        "command": "train", "best_iteration": best_i, "records": len(res.dataset),
        "validation": res.scores}))
    print(f"trained {cfg.policy} for {cfg.dagger.iterations} iteration(s); "
          f"best = iteration {best_i}; wrote {out}")
    return 0


def _controller(cfg, checkpoint):
    if checkpoint == "expert":
        return "expert", "expert"
    policy = load_checkpoint(checkpoint)
    return policy, policy.kind


def _print_rows(rows) -> None:
    print(f"{'params':<24}{'policy':<10}{'success %':>10}  cost")
    for r in rows:
        m = r.metrics
        cost = "-" if m.mean_cost is None else f"{m.mean_cost:.2f} ± {m.std_cost:.2f}"
        print(f"{r.params:<24}{r.policy:<10}{m.success_pct:>10.1f}  {cost}")


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    ctrl, name = _controller(cfg, args.checkpoint)
    task = cfg.build_task()
    if ctrl == "expert":
        ctrl = cfg.build_expert(task)
    m = evaluate(ctrl, task, args.trials or cfg.eval.trials, cfg.eval.steps or task.test_steps,
                 cfg.eval.seed, cfg.eval.batch_size)
    result = SweepResult([SweepRow(cfg.task, "baseline", name, m)], cfg.to_dict(),
                         {"eval_seed": cfg.eval.seed})
    _print_rows(result.rows)
    out = Path(args.output_dir or cfg.output_dir)
    emit_report(result, out, stem="eval")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.trials:
        cfg.eval.trials = args.trials
    ctrl, name = _controller(cfg, args.checkpoint)
    result = run_sweep(cfg, ctrl, policy_name=name)
    _print_rows(result.rows)
    out = Path(args.output_dir or cfg.output_dir)
    csv_path, json_path = emit_report(result, out, stem="sweep")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_expert_demo(args) -> int:
    cfg = load_config(args.config)
    task = cfg.build_task()
    expert = cfg.build_expert(task)
    m = evaluate(expert, task, args.episodes, cfg.eval.steps or task.test_steps, cfg.eval.seed)
    _print_rows([SweepRow(cfg.task, "baseline", "expert", m)])
    return 0


def grad_check_suite(tol: float = 1e-4) -> list:
    """(name, max relative error) for every primitive and the PI-Net end to end."""
    from .pinet import PiNet, pinet_grad_check
    rng = np.random.default_rng(0)
    W, b = rng.normal(size=(3, 4)), rng.normal(size=3)
    y = rng.normal(size=(2, 4))
    pos = rng.uniform(0.5, 2.0, size=(2, 4))
    T = ad.Tensor
    cases = {
        "affine": lambda x: ad.reduce_sum(ad.tanh(ad.affine(T(W), x, T(b)))),
        "tanh": lambda x: ad.reduce_sum(ad.tanh(x)),
        "add": lambda x: ad.reduce_sum(ad.mul(ad.add(x, T(y)), x)),
        "mul": lambda x: ad.reduce_sum(ad.mul(x, ad.mul(x, T(y)))),
        "exp": lambda x: ad.reduce_sum(ad.exp(ad.scale(x, 0.5))),
        "negate": lambda x: ad.reduce_sum(ad.mul(ad.negate(x), x)),
        "divide": lambda x: ad.reduce_sum(ad.divide(x, ad.add(ad.mul(x, x), T(pos)))),
        "reduce_sum": lambda x: ad.reduce_sum(ad.exp(ad.reduce_sum(ad.scale(x, 0.3), axis=0))),
        "concat": lambda x: ad.reduce_sum(ad.tanh(ad.concat([x, ad.mul(x, x)], axis=-1))),
        "slice": lambda x: ad.reduce_sum(ad.mul(ad.slice_(x, (slice(None), slice(1, 3))),
                                                ad.slice_(x, (slice(None), slice(0, 2))))),
        "reshape": lambda x: ad.reduce_sum(ad.tanh(ad.mul(ad.reshape(x, (8,)), T(y.ravel())))),
        "expand": lambda x: ad.reduce_sum(ad.tanh(ad.expand(x, 1, 3))),
    }
    x0 = rng.normal(size=(2, 4))
    results = [(name, ad.grad_check(f, x0)) for name, f in cases.items()]
    net = PiNet(5, 1, hidden=8, horizon=3, K=4, dt=0.05, sigma=0.5, control_scale=[10.0], rng=rng)
    obs, warm, target = rng.normal(size=(2, 5)), rng.normal(size=(2, 3, 1)), rng.normal(size=(2, 3, 1))
    noise = net.sigma * np.sqrt(net.dt) * rng.normal(size=(1, 2, 4, 3, 1))
    results.append(("pinet end-to-end", pinet_grad_check(net, obs, warm, target, noise)))
    return results


def cmd_grad_check(args) -> int:
    ok = True
    for name, err in grad_check_suite():
        passed = err < args.tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<18} max rel err {err:.2e}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpcdagger", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="run DAgger and write checkpoints, dataset and manifest")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint (or 'expert') at the baseline setting")
    s.add_argument("--config", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--trials", type=int)
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="evaluate over the perturbation grid and write reports")
    s.add_argument("--config", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--trials", type=int)
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("expert-demo", help="expert-only rollouts as a sanity check")
    s.add_argument("--config", required=True)
    s.add_argument("--episodes", type=int, default=16)
    s.set_defaults(func=cmd_expert_demo)

    s = sub.add_parser("grad-check", help="finite-difference check of every autodiff primitive")
    s.add_argument("--tol", type=float, default=1e-4)
    s.set_defaults(func=cmd_grad_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
