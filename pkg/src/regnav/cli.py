"""Command-line entry point.

Exit status: 0 ok, 2 configuration error, 3 environment or infeasible
task error, 4 numerical abort (including a failed gradient check).
The run root defaults to ``./runs`` and is overridden by ``REGNAV_RUN_ROOT``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config, run_root
from .evalkit.episodes import ExpertPolicy, ModelPolicy, RandomPolicy, run_suite
from .evalkit.metrics import compute_metrics
from .evalkit.mi import mi_sweep
from .evalkit.report import emit_report, write_mi_report
from .evalkit.suite import SPLITS, SuiteError, sample_tasks
from .navmodel import VARIANTS, ModelConfig, NavModel
from .nnet.checkpoint import CheckpointError, load_checkpoint
from .runfiles import SceneSetError, copy_scene_dir, load_scene_sets, write_scene_sets
from .trainer import InfeasibleTaskError, NumericalAbort, Trainer
from .verify import full_loss_check
from .world.env import SceneContext
from .world.navgraph import UnreachableGoalError
from .world.scene import SceneGenerationError, generate_scene_sets

EXIT_OK, EXIT_CONFIG, EXIT_ENV, EXIT_NUMERIC = 0, 2, 3, 4
log = logging.getLogger("regnav")


def _config(args, overrides: dict) -> RunConfig:
    return load_config(getattr(args, "config", None), overrides)


def _scene_dir(args) -> Path:
    return Path(args.scenes) if getattr(args, "scenes", None) else run_root() / "scenes"


# -- gen-scenes ---------------------------------------------------------------
def cmd_gen_scenes(args) -> int:
    cfg = _config(args, {"scenes.seed": args.seed, "scenes.n_train": args.n_train, "scenes.n_val": args.n_val,
                         "scenes.n_test": args.n_test, "scenes.min_size": args.min_size,
                         "scenes.max_size": args.max_size, "scenes.wall_density": args.wall_density})
    s = cfg.scenes
    sets = generate_scene_sets(s.seed, (s.n_train, s.n_val, s.n_test), s.min_size, s.max_size, s.wall_density,
                               s.object_classes, s.objects_per_scene)
    out = Path(args.out) if args.out else run_root() / "scenes"
    manifest = write_scene_sets(sets, out, cfg.to_dict()["scenes"])
    print(f"wrote {sum(manifest['counts'].values())} scenes to {out} "
          f"({', '.join(f'{k}={v}' for k, v in manifest['counts'].items())}); manifest hash {manifest['hash'][:16]}")
    return EXIT_OK


# -- train --------------------------------------------------------------------
def cmd_train(args) -> int:
    cfg = _config(args, {"model.variant": args.variant, "model.policy_z_source": args.policy_z_source,
                         "model.target_mode": args.target_mode, "train.workers": args.workers,
                         "train.seed": args.seed, "train.max_episodes": args.max_episodes,
                         "train.max_updates": args.max_updates, "train.max_minutes": args.max_minutes,
                         "train.lr": args.lr, "train.mode": args.mode,
                         "train.val_every": args.val_every, "train.val_tasks": args.val_tasks})
    scene_dir = _scene_dir(args)
    sets = load_scene_sets(scene_dir, ("train", "val"))
    run_dir = Path(args.run_dir) if args.run_dir else run_root() / f"{cfg.model.variant}_seed{cfg.train.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(cfg.to_json())
    copy_scene_dir(scene_dir, run_dir / "scenes")
    world = cfg.world.world_config(cfg.model.target_mode)
    trainer = Trainer(cfg.model, cfg.train, sets["train"], sets["val"], run_dir, world)
    result = trainer.train()
    best = max(result.val_log, key=lambda r: (r["SR"], r["SPL"], r["episodes"]))
    print(f"trained {result.episodes} episodes / {result.updates} updates in {result.seconds:.1f}s; "
          f"best validation SR {best['SR']:.1f}% SPL {best['SPL']:.1f}% at episode {best['episodes']}")
    return EXIT_OK


# -- eval ---------------------------------------------------------------------
def load_agent(checkpoint) -> tuple[NavModel, dict, dict]:
    store, meta, _ = load_checkpoint(checkpoint)
    model = NavModel(ModelConfig.from_dict(meta["model"]))
    return model, store.view(), meta


def evaluate(cfg: RunConfig, scenes: dict, policy_name: str, checkpoint=None, split: str | None = None,
             n: int | None = None, seed: int | None = None, auto_stop: bool | None = None, mode: str | None = None):
    """Build the suite for ``split`` and run one policy on it; returns ``(report, trajectories, suite)``."""
    ev = cfg.eval
    split = split or ev.split
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    n, seed = n or ev.n, ev.seed if seed is None else seed
    auto_stop = ev.auto_stop if auto_stop is None else auto_stop
    model_cfg, params, model = cfg.model, None, None
    if policy_name == "model":
        if checkpoint is None:
            raise ConfigError("--checkpoint or --run-dir is required for --policy model")
        model, params, meta = load_agent(checkpoint)
        model_cfg = model.cfg
        if meta.get("train", {}).get("train_classes") is not None:
            cfg.train = type(cfg.train).from_dict({**cfg.train.to_dict(),
                                                   "train_classes": meta["train"]["train_classes"]})
    known = tuple(cfg.train.train_classes or range(1, cfg.scenes.object_classes + 1))
    scene_split = {"train": "train", "val": "val"}.get(split, "test")
    if scene_split not in scenes:
        raise SceneSetError(f"scene split {scene_split!r} not available")
    world = cfg.world.world_config(model_cfg.target_mode)
    ctxs = {s.id: SceneContext(s, world) for s in scenes[scene_split]}
    classes = tuple(ev.novel_classes) if split == "unseen_novel_targets" else known
    train_ids = [s.id for s in scenes.get("train", [])] if split != "train" else []
    suite = sample_tasks(ctxs.values(), split, n, seed, ev.min_geo, classes, train_scene_ids=train_ids,
                         train_classes=known if split == "unseen_novel_targets" else None)
    if policy_name == "model":
        policy = ModelPolicy(model, params, mode or ev.mode)
    elif policy_name == "random":
        policy = RandomPolicy()
    elif policy_name == "expert":
        policy = ExpertPolicy()
    else:
        raise ConfigError(f"unknown policy {policy_name!r}")
    trajs = run_suite(policy, suite.tasks, ctxs, seed, auto_stop, cfg.world.max_steps)
    report = compute_metrics(trajs, suite.P, split, {"policy": policy_name, "auto_stop": bool(auto_stop),
                                                      "seed": seed, "mode": mode or ev.mode,
                                                      "checkpoint": None if checkpoint is None else str(checkpoint)})
    return report, trajs, suite


def _return_curve(run_dir: Path, window: int = 50):
    path = run_dir / "train_log.jsonl"
    if not path.exists():
        return None
    pts = [(r["episodes"], r["episode_return"]) for r in map(json.loads, path.read_text().splitlines())
           if r.get("episode_return") is not None]
    if len(pts) < 2:
        return None
    ys = np.convolve([p[1] for p in pts], np.ones(window) / window, mode="valid") if len(pts) >= window else None
    if ys is None:
        return pts
    return [(pts[i + window - 1][0], float(y)) for i, y in enumerate(ys)]


def cmd_eval(args) -> int:
    run_dir = Path(args.run_dir) if args.run_dir else None
    cfg_path = args.config or (run_dir / "config.json" if run_dir and (run_dir / "config.json").exists() else None)
    cfg = load_config(cfg_path, {"eval.n": args.n, "eval.seed": args.seed, "eval.mode": args.mode})
    checkpoint = args.checkpoint or (run_dir / "checkpoints" / "best.ckpt" if run_dir else None)
    if args.scenes:
        scene_dir = Path(args.scenes)
    elif run_dir and (run_dir / "scenes").exists():
        scene_dir = run_dir / "scenes"
    else:
        scene_dir = run_root() / "scenes"
    scenes = load_scene_sets(scene_dir)
    report, _, _ = evaluate(cfg, scenes, args.policy, checkpoint if args.policy == "model" else None, args.split,
                            auto_stop=args.auto_stop)
    suffix = "_autostop" if args.auto_stop else ""
    out = Path(args.out) if args.out else (run_dir or run_root()) / "eval" / f"{report.split}_{args.policy}{suffix}"
    emit_report(report, out, returns=_return_curve(run_dir) if run_dir else None)
    print(f"{report.split} ({report.N} tasks, P={report.P:.1f}%): SR {report.SR:.1f}%  SPL {report.SPL:.1f}%  "
          f"CR {report.CR:.1f}%  -> {out}")
    return EXIT_OK


# -- mi-check -----------------------------------------------------------------
def cmd_mi_check(args) -> int:
    scenes = []
    if args.scenes:
        scenes = load_scene_sets(args.scenes, ("train",))["train"][:args.scene_instances]
    rows = mi_sweep(args.instances, args.seed, args.samples, scenes)
    out = Path(args.out) if args.out else run_root() / "mi_report.csv"
    write_mi_report(rows, out)
    bad = [r for r in rows if r.bound > r.exact + 1e-9]
    for r in rows:
        print(f"{r.instance:>14s}  exact {r.exact:.6f}  bound {r.bound:.6f}  gap {r.gap:.3e}")
    print(f"{len(rows)} instances, {len(bad)} violations -> {out}")
    return EXIT_NUMERIC if bad else EXIT_OK


# -- gradcheck ----------------------------------------------------------------
def cmd_gradcheck(args) -> int:
    variants = VARIANTS if args.variant == "all" else (args.variant,)
    if any(v not in VARIANTS for v in variants):
        raise ConfigError(f"unknown variant {args.variant!r}")
    overrides = {}
    if args.small:
        overrides = dict(state_dim=16, latent_dim=8, hidden=24, encoder_hidden=(20,))
    rows, seconds = full_loss_check(args.seed, args.probes, not args.no_wide, args.fault_inject, variants,
                                    **overrides)
    ok = True
    print(f"{'variant':<11s} {'group':<13s} {'probes':>6s} {'redrawn':>7s} {'max rel err':>12s}  result")
    for r in rows:
        passed = r.result.passed(args.tol) and r.result.probes >= args.probes
        ok &= passed
        print(f"{r.variant:<11s} {r.group:<13s} {r.result.probes:>6d} {r.result.redrawn:>7d} "
              f"{r.max_rel_error:>12.3e}  {'pass' if passed else 'FAIL'}")
    print(f"{'all groups pass' if ok else 'gradient check FAILED'} ({seconds:.1f}s)")
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="regnav", description="Goal-conditioned grid navigation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenes", help="generate train/val/test scene sets")
    g.add_argument("--config")
    g.add_argument("--out")
    g.add_argument("--seed", type=int)
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-val", type=int)
    g.add_argument("--n-test", type=int)
    g.add_argument("--min-size", type=int)
    g.add_argument("--max-size", type=int)
    g.add_argument("--wall-density", type=float)
    g.set_defaults(func=cmd_gen_scenes)

    t = sub.add_parser("train", help="train one variant")
    t.add_argument("--config")
    t.add_argument("--scenes")
    t.add_argument("--run-dir")
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--policy-z-source", choices=("prior", "posterior"))
    t.add_argument("--target-mode", choices=("view", "class"))
    t.add_argument("--workers", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--max-episodes", type=int)
    t.add_argument("--max-minutes", type=float, help="wall-clock training budget")
    t.add_argument("--max-updates", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--mode", choices=("sync", "async", "locked"))
    t.add_argument("--val-every", type=int)
    t.add_argument("--val-tasks", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint or a reference policy")
    e.add_argument("--config")
    e.add_argument("--run-dir")
    e.add_argument("--checkpoint")
    e.add_argument("--scenes")
    e.add_argument("--split", choices=SPLITS)
    e.add_argument("--policy", choices=("model", "random", "expert"), default="model")
    e.add_argument("--n", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--mode", choices=("greedy", "sample"))
    e.add_argument("--auto-stop", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("mi-check", help="verify the mutual-information lower bound on tabular dynamics")
    m.add_argument("--instances", type=int, default=20)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--samples", type=int, default=2000)
    m.add_argument("--scenes", help="also check pose-graph dynamics of these training scenes")
    m.add_argument("--scene-instances", type=int, default=2)
    m.add_argument("--out")
    m.set_defaults(func=cmd_mi_check)

    c = sub.add_parser("gradcheck", help="finite-difference check of the full training loss")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--probes", type=int, default=200, help="probed coordinates per parameter group")
    c.add_argument("--variant", default="full", help="a variant name or 'all'")
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--no-wide", action="store_true", help="evaluate in float64 instead of extended precision")
    c.add_argument("--small", action="store_true", help="use reduced layer sizes")
    c.add_argument("--fault-inject", metavar="PARAM", nargs="?", const="pol1.W",
                   help="corrupt the analytic gradient of PARAM (default pol1.W)")
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SceneGenerationError, SceneSetError, SuiteError, InfeasibleTaskError, UnreachableGoalError,
            CheckpointError, FileNotFoundError, PermissionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ENV
    except NumericalAbort as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
