"""End-to-end acceptance checks, one test per criterion plus post-training probes.

Each criterion records a PASS/FAIL line that is printed in the terminal
summary. Training budgets can be shortened for quick local runs with
``REGNAV_ACCEPT_MINUTES`` (main training run) and ``REGNAV_ACCEPT_GRID_EPISODES``
(per-run budget of the variant x seed grid); the defaults are the stated ones.
"""

import csv
import json
import math
import os
import time
import warnings

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, ascii_scene

from regnav.cli import main
from regnav.navmodel import VARIANTS, ControllerState, ModelConfig, NavModel
from regnav.nnet.checkpoint import load_checkpoint
from regnav.trainer import TrainConfig, Trainer
from regnav.verify import random_batch
from regnav.world import SceneContext, expert_shortest_path, sample_task, start_episode, step
from regnav.world.navgraph import Action

BUDGET_MINUTES = float(os.environ.get("REGNAV_ACCEPT_MINUTES", "60"))
GRID_EPISODES = int(os.environ.get("REGNAV_ACCEPT_GRID_EPISODES", "1500"))
SEEDS = (0, 1, 2)
# Desk-scale learning rate; at 1e-4 the losses barely move within the budget.
DESK_LR = 1e-3


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def eval_cli(run_dir, out, *extra):
    code = main(["eval", "--run-dir", str(run_dir), "--out", str(out), *extra])
    assert code == 0
    return json.loads((out / "report.json").read_text())


# -- shared training runs ----------------------------------------------------------------

@pytest.fixture(scope="module")
def root(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    assert main(["gen-scenes", "--out", str(root / "scenes")]) == 0
    return root


def write_config(path, train=None, model=None):
    path.write_text(json.dumps({"train": {"lr": DESK_LR, **(train or {})}, "model": model or {}}))
    return path


@pytest.fixture(scope="module")
def main_run(root):
    """The default-setup full-variant run under the wall-clock budget."""
    cfg = write_config(root / "main.json", {"max_episodes": 10**9, "max_minutes": BUDGET_MINUTES,
                                            "val_every": 2000})
    t0 = time.perf_counter()
    code = main(["train", "--config", str(cfg), "--scenes", str(root / "scenes"), "--run-dir",
                 str(root / "main"), "--variant", "full", "--workers", "6", "--seed", "0"])
    assert code == 0
    return root / "main", time.perf_counter() - t0


@pytest.fixture(scope="module")
def grid(root):
    """Every variant x three seeds at a short budget, keyed by (variant, seed)."""
    cfg = write_config(root / "grid.json", {"max_episodes": GRID_EPISODES, "val_every": GRID_EPISODES,
                                            "keep_checkpoints": False,
                                            "curriculum": [0, GRID_EPISODES // 8, GRID_EPISODES // 4,
                                                           3 * GRID_EPISODES // 8]})
    runs = {}
    for variant in VARIANTS:
        for seed in SEEDS:
            run = root / "grid" / f"{variant}_{seed}"
            assert main(["train", "--config", str(cfg), "--scenes", str(root / "scenes"), "--run-dir", str(run),
                         "--variant", variant, "--seed", str(seed)]) == 0
            runs[variant, seed] = run
    return runs


# -- criterion 1 ---------------------------------------------------------------------------

def test_criterion_1_gradient_correctness(capsys):
    t0 = time.perf_counter()
    code = main(["gradcheck", "--probes", "200", "--variant", "full"])
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    rows = [line.split() for line in out.splitlines() if line.startswith("full ")]
    errors = {r[1]: float(r[4]) for r in rows}
    probes = {r[1]: int(r[2]) for r in rows}
    groups = set(NavModel(ModelConfig()).param_groups(NavModel(ModelConfig()).init_params(0).names()))
    ok = (code == 0 and set(errors) == groups and len(rows) == len(groups)
          and max(errors.values()) < 1e-4 and min(probes.values()) >= 200 and elapsed < 300)
    record(1, ok, f"max rel err {max(errors.values(), default=math.nan):.2e} over {len(errors)} groups, "
                  f"{elapsed:.0f}s")
    assert ok, out


# -- criterion 2 ---------------------------------------------------------------------------

def test_criterion_2_mi_bound(tmp_path):
    out = tmp_path / "mi_report.csv"
    t0 = time.perf_counter()
    code = main(["mi-check", "--instances", "20", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    rows = list(csv.DictReader(out.open()))
    random_rows = [r for r in rows if r["kind"] == "random"]
    injective = next(r for r in rows if r["kind"] == "injective")
    worst = max(float(r["bound_bits"]) - float(r["exact_bits"]) for r in rows)
    gap = float(injective["gap_bits"])
    ok = (code == 0 and len(random_rows) >= 20 and worst <= 1e-9 and abs(gap) < 1e-9
          and abs(float(injective["exact_bits"]) - math.log2(7)) < 1e-9 and elapsed < 60)
    record(2, ok, f"{len(rows)} rows, max(bound-exact) {worst:.1e}, injective gap {gap:.1e}, "
                  f"I={float(injective['exact_bits']):.4f} bits, {elapsed:.1f}s")
    assert ok


# -- criterion 3 ---------------------------------------------------------------------------

def bfs_pose_distance(scene, start, goals):
    """Plain BFS over (x, y, heading) built from the motion rules, not from NavGraph."""
    vec = {0: (1, 0), 90: (0, 1), 180: (-1, 0), 270: (0, -1)}
    goals = {tuple(g) for g in goals}
    frontier, seen, d = [tuple(start)], {tuple(start)}, 0
    while frontier:
        if any(p in goals for p in frontier):
            return d
        nxt = []
        for x, y, h in frontier:
            succ = [(x, y, (h + 90) % 360), (x, y, (h + 270) % 360)]
            for turn in (0, 90, 180, 270):
                dx, dy = vec[(h + turn) % 360]
                if scene.is_free(x + dx, y + dy):
                    succ.append((x + dx, y + dy, h))
            for p in succ:
                if p not in seen:
                    seen.add(p)
                    nxt.append(p)
        frontier, d = nxt, d + 1
    return None


def test_criterion_3_reward_and_expert_oracles(contexts):
    ctxs = list(contexts.values())
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        ctx = ctxs[int(rng.integers(len(ctxs)))]
        task = sample_task(ctx, rng)
        length = int(rng.integers(1, 60))
        ep = start_episode(ctx, task, max_steps=length + 1)
        for _ in range(length):
            legal = [a for a, _ in ctx.graph.edges[ep.pose]]
            step(ep, legal[int(rng.integers(len(legal)))])
        assert not any(ep.collisions)
        cls = task.goal_class
        expect = ctx.geo(ep.poses[1], cls) - ctx.geo(ep.poses[-1], cls) - 0.01 * length
        worst = max(worst, abs(sum(ep.rewards) - expect))
    mismatches = 0
    for i in range(200):
        r = np.random.default_rng([77, i])
        ctx = ctxs[i % len(ctxs)]
        task = sample_task(ctx, r)
        path = expert_shortest_path(ctx.graph, task.start, task.goal_poses)
        mismatches += len(path) - 1 != bfs_pose_distance(ctx.scene, task.start, task.goal_poses)
    ok = worst < 1e-9 and mismatches == 0
    record(3, ok, f"telescoping max err {worst:.1e} on 1000 walks, expert/BFS mismatches {mismatches}/200")
    assert ok


# -- criterion 4 ---------------------------------------------------------------------------

def test_criterion_4_loss_composition():
    worst_total, min_kl, n = 0.0, math.inf, 0
    for variant in VARIANTS:
        if variant == "random":
            continue
        for target_mode in ("view", "class"):
            cfg = ModelConfig(variant=variant, target_mode=target_mode, state_dim=16, latent_dim=8, hidden=24,
                              encoder_hidden=(24,))
            model = NavModel(cfg)
            for seed in range(10):
                params = model.init_params(seed).snapshot()
                batch, noise = random_batch(cfg, 8, seed)
                batch.next_states = model.encode(params, batch.next_views)
                if variant == "plain_rl":
                    batch.advantages = np.random.default_rng(seed).normal(size=8)
                loss, _ = model.forward_train(params, batch, noise)
                if variant == "plain_rl":
                    expect = loss.policy_gradient - cfg.entropy_coef * loss.entropy + cfg.value_weight * loss.L_v
                else:
                    expect = cfg.alpha * loss.E1 + cfg.value_weight * loss.L_v
                    expect += cfg.beta * loss.E2 if loss.E2 is not None else 0.0
                    expect += cfg.gamma * loss.E3 if loss.E3 is not None else 0.0
                    if loss.E3 is not None:
                        min_kl = min(min_kl, loss.E3)
                worst_total = max(worst_total, abs(loss.total - expect))
                n += 1
    model = NavModel(ModelConfig())
    params = model.init_params(0).snapshot()
    params["logits.W"][:] = 0.0
    params["logits.b"][:] = 0.0
    batch, noise = random_batch(model.cfg, 7, 3)
    e1_uniform = float(model.forward_train(params, batch, noise)[0].E1)
    ok = worst_total < 1e-12 and min_kl >= 0 and abs(e1_uniform - math.log(7)) < 1e-9
    record(4, ok, f"{n} randomized losses, max |total-sum| {worst_total:.1e}, min KL {min_kl:.3g}, "
                  f"uniform E1 {e1_uniform:.12f}")
    assert ok


# -- criterion 5 ---------------------------------------------------------------------------

def test_criterion_5_metric_sanity(root, tmp_path):
    reports = {}
    for policy in ("expert", "random"):
        for split in ("unseen_known_targets", "unseen_novel_targets", "val"):
            out = tmp_path / f"{policy}_{split}"
            assert main(["eval", "--scenes", str(root / "scenes"), "--policy", policy, "--split", split,
                         "--out", str(out)]) == 0
            reports[policy, split] = json.loads((out / "report.json").read_text())
    expert = reports["expert", "unseen_known_targets"]
    rand = reports["random", "unseen_known_targets"]
    spl_ok = all(r["SPL"] <= r["SR"] + 1e-12 for r in reports.values())
    ok = expert["SR"] == expert["SPL"] == 100.0 and rand["SR"] <= 5.0 and spl_ok
    record(5, ok, f"expert SR/SPL {expert['SR']:.0f}/{expert['SPL']:.0f}, random SR {rand['SR']:.1f}%, "
                  f"SPL<=SR on {len(reports)} suites: {spl_ok}")
    assert ok


# -- criterion 6 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_training_efficacy(main_run, grid, root, tmp_path):
    run, seconds = main_run
    full = eval_cli(run, tmp_path / "full")
    rand = eval_cli(run, tmp_path / "random", "--policy", "random")
    assert full["SPL"] <= full["SR"]
    means = {}
    for variant in ("full", "nogen", "bc"):
        means[variant] = float(np.mean([eval_cli(grid[variant, s], tmp_path / f"{variant}_{s}")["SR"]
                                        for s in SEEDS]))
    if not means["full"] >= means["nogen"] >= means["bc"]:
        warnings.warn(f"soft ordering full >= nogen >= bc not met: {means}", stacklevel=1)
    ok = full["SR"] >= 50.0 and full["SR"] >= 10 * rand["SR"] and full["SR"] > 0 and seconds <= 60 * 60 + 300
    record(6, ok, f"full SR {full['SR']:.1f}% SPL {full['SPL']:.1f}% vs random {rand['SR']:.1f}% after "
                  f"{seconds / 60:.1f} min; 3-seed mean SR full/nogen/bc "
                  f"{means['full']:.1f}/{means['nogen']:.1f}/{means['bc']:.1f}")
    assert ok


# -- criterion 7 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_auto_stop_pairing(grid, tmp_path):
    bad = []
    for (variant, seed), run in sorted(grid.items()):
        plain = eval_cli(run, tmp_path / f"{variant}_{seed}")
        auto = eval_cli(run, tmp_path / f"{variant}_{seed}_auto", "--auto-stop")
        assert plain["SPL"] <= plain["SR"] and auto["SPL"] <= auto["SR"]
        if auto["SR"] < plain["SR"]:
            bad.append((variant, seed, plain["SR"], auto["SR"]))
    ok = not bad
    record(7, ok, f"{len(grid)} checkpoints ({len(VARIANTS)} variants x {len(SEEDS)} seeds), violations {bad}")
    assert ok


# -- criterion 8 ---------------------------------------------------------------------------

def test_criterion_8_reproducibility(root, tmp_path):
    cfg = write_config(tmp_path / "repro.json", {"max_episodes": 300, "val_every": 100, "val_tasks": 20})
    for name in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--scenes", str(root / "scenes"), "--run-dir",
                     str(tmp_path / name), "--variant", "full", "--workers", "1", "--seed", "1"]) == 0
    same_log = (tmp_path / "a" / "val_log.jsonl").read_bytes() == (tmp_path / "b" / "val_log.jsonl").read_bytes()
    same_eval = True
    for extra in ((), ("--mode", "sample"), ("--auto-stop",), ("--policy", "random"), ("--policy", "expert")):
        outs = []
        for k in range(2):
            out = tmp_path / f"eval_{'_'.join(extra)}_{k}"
            eval_cli(tmp_path / "a", out, "--seed", "5", *extra)
            outs.append([(out / f).read_bytes() for f in ("report.json", "bins.csv", "curves.svg")])
        same_eval &= outs[0] == outs[1]
    ok = same_log and same_eval
    record(8, ok, f"val_log byte-identical: {same_log}; eval outputs identical per seed: {same_eval}")
    assert ok


# -- post-training probes ------------------------------------------------------------------

L_MAZE = ["#####", "#...#", "###.#", "#...#", "#####"]


@pytest.fixture(scope="module")
def maze_run():
    scene = ascii_scene(L_MAZE, objects=[(1, (0, 3))], scene_id=0)
    twin = ascii_scene(L_MAZE, objects=[(1, (0, 3))], scene_id=1)
    tc = TrainConfig(workers=1, max_episodes=10**9, max_updates=2000, val_every=10**6, val_tasks=10,
                     curriculum=None, train_classes=(1,), min_geo=1, lr=DESK_LR)
    trainer = Trainer(ModelConfig(), tc, [scene], [twin])
    return trainer, trainer.train(), SceneContext(scene)


def test_probe_single_scene_e1(maze_run):
    _, res, _ = maze_run
    e1 = [r["losses"]["E1"] for r in res.train_log]
    assert res.updates == 2000
    assert np.mean(e1[-100:]) < 0.3 < np.mean(e1[:50])


def test_probe_stops_at_goal(maze_run):
    trainer, res, ctx = maze_run
    model = trainer.model
    goal = ctx.goal(1)
    task = next(t for t in (sample_task(ctx, np.random.default_rng(s), (1,), 1) for s in range(50))
                if t.optimal_length == 2)
    stops = 0
    for seed in range(100):
        ep = start_episode(ctx, task)
        step(ep, int(expert_shortest_path(ctx.graph, task.start, goal.goal_poses)[0]))
        assert ctx.is_success_state(ep.pose, 1)
        ctrl = ControllerState(rng=np.random.default_rng(seed), prev_action=ep.actions[-1], t=1)
        stops += model.act(res.best_params, ep.observation, task.target.vector, ctrl, "sample") == Action.STOP
    assert stops >= 95


@pytest.mark.slow
def test_probe_return_curve_rises(main_run):
    run, _ = main_run
    pts = [(r["episodes"], r["episode_return"]) for r in read_jsonl(run / "train_log.jsonl")
           if "episode_return" in r and r["episodes"] <= 10_000]
    x, y = np.array(pts).T
    assert np.polyfit(x, y, 1)[0] > 0


@pytest.mark.slow
def test_probe_random_variant_validation(grid):
    for seed in SEEDS:
        for rec in read_jsonl(grid["random", seed] / "val_log.jsonl"):
            assert rec["SR"] <= 5.0


@pytest.mark.slow
def test_probe_checkpoint_metadata(main_run):
    run, _ = main_run
    _, meta, _ = load_checkpoint(run / "checkpoints" / "best.ckpt")
    assert meta["model"]["variant"] == "full" and meta["train"]["workers"] == 6
