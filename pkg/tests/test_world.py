import json
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ascii_scene
from regnav.world import (COLLISION_PENALTY, STEP_PENALTY, SUCCESS_REWARD, Action, EpisodeFinishedError,
                          NavGraph, Pose, RenderConfig, SceneContext, SceneSpec, UnreachableGoalError,
                          WorldConfig, apply_action, check_scene, expert_action, expert_shortest_path,
                          expert_tuple, generate_scene, geodesic, load_scene, observe, render_view,
                          sample_task, save_scene, start_episode, step, view_classes)
from regnav.world.render import HEADINGS, HEADING_VEC
from regnav.world.scene import difficulty_groups, generate_scene_sets, scene_difficulty

CORRIDOR = ["#########",
            "#.......#",
            "#########"]


def corridor_ctx(**kw):
    scene = ascii_scene(CORRIDOR, objects=[(1, (8, 1))])
    return SceneContext(scene, WorldConfig(**kw))


def open_room(n=7, objects=()):
    rows = ["#" * n] + ["#" + "." * (n - 2) + "#" for _ in range(n - 2)] + ["#" * n]
    return ascii_scene(rows, objects=objects)


# -- scenes ---------------------------------------------------------------

def test_generate_scene_is_pure():
    spec = SceneSpec(11, 9)
    assert generate_scene(5, spec) == generate_scene(5, spec)
    assert generate_scene(5, spec) != generate_scene(6, spec)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), w=st.integers(5, 13), h=st.integers(5, 13),
       density=st.floats(0.0, 0.3))
def test_generated_scenes_are_valid(seed, w, h, density):
    scene = generate_scene(seed, SceneSpec(w, h, density, objects_per_scene=3))
    check_scene(scene)
    classes = [c for c, _ in scene.objects]
    assert len(set(classes)) == len(classes) == 3


def test_scene_json_round_trip(tmp_path):
    scene = generate_scene(3, SceneSpec(10, 12))
    save_scene(scene, tmp_path / "s.json")
    again = load_scene(tmp_path / "s.json")
    assert again == scene
    assert np.array_equal(again.occupancy, scene.occupancy)
    doc = json.loads((tmp_path / "s.json").read_text())
    assert set(doc) == {"id", "width", "height", "cell_size_m", "object_classes", "occupancy", "objects"}


def test_scene_rejects_floating_object_and_gaps():
    with pytest.raises(ValueError, match="wall-mounted"):
        ascii_scene(CORRIDOR, objects=[(1, (0, 0))])
    with pytest.raises(ValueError, match="border"):
        ascii_scene(["#####", "#...#", "#...."])
    with pytest.raises(ValueError, match="connected"):
        ascii_scene(["#####", "#.#.#", "#####"])


def test_scene_sets_have_distinct_ids_and_sizes():
    sets = generate_scene_sets(0)
    ids = [s.id for split in sets.values() for s in split]
    assert ids == list(range(30))
    assert [len(sets[k]) for k in ("train", "val", "test")] == [20, 5, 5]
    assert all(9 <= s.width <= 13 and 9 <= s.height <= 13 for s in sets["train"])
    groups = difficulty_groups(sets["train"])
    assert sorted(groups.values()) == sorted([1, 2, 3, 4] * 5)
    ranked = sorted(sets["train"], key=lambda s: (scene_difficulty(s), s.id))
    assert [groups[s.id] for s in ranked] == sorted(groups.values())


# -- rendering --------------------------------------------------------------

def test_wall_two_cells_ahead():
    view = render_view(open_room(5), Pose(2, 2, 0)).reshape(9, 8)
    assert view[4, 0] == pytest.approx(0.25)
    assert view[4, 1] == 1.0


def test_adjacent_wall_depth():
    view = render_view(open_room(5), Pose(3, 2, 0)).reshape(9, 8)
    assert np.allclose(view[3:6, 0], 1 / 8)


def test_miss_reports_max_depth_wall():
    scene = ascii_scene(["#" * 14, "#" + "." * 12 + "#", "#" * 14])
    view = render_view(scene, Pose(1, 1, 0), RenderConfig(rays=1, d_max=8.0)).reshape(1, 8)
    assert view[0, 0] == 1.0 and view[0, 1] == 1.0


def test_render_is_pure_and_observe_order():
    scene = generate_scene(7, SceneSpec(11, 11))
    pose = Pose(*scene.free_cells()[3], 90)
    obs = observe(scene, pose)
    assert np.array_equal(obs, observe(scene, pose))
    assert np.array_equal(obs[0], render_view(scene, pose))
    for i, rel in enumerate(HEADINGS):
        assert np.array_equal(obs[i], render_view(scene, Pose(pose.x, pose.y, (90 + rel) % 360)))


def test_rotated_observation_is_permutation():
    scene = generate_scene(8, SceneSpec(11, 11))
    x, y = scene.free_cells()[5]
    a = observe(scene, Pose(x, y, 0))
    b = observe(scene, Pose(x, y, 180))
    assert np.array_equal(b, a[[2, 3, 0, 1]])


def test_symmetric_room_centre_views_equal():
    obs = observe(open_room(7), Pose(3, 3, 0))
    for k in range(1, 4):
        assert np.array_equal(obs[k], obs[0])


def test_view_classes_reports_objects():
    scene = ascii_scene(CORRIDOR, objects=[(4, (8, 1))])
    assert view_classes(render_view(scene, Pose(6, 1, 0)), 6) == {4}
    assert view_classes(render_view(scene, Pose(6, 1, 180)), 6) == set()


# -- pose graph ---------------------------------------------------------------

def oracle_graph(scene):
    """Pose graph built from first principles, independently of NavGraph."""
    g = nx.DiGraph()
    for x, y in scene.free_cells():
        for h in HEADINGS:
            g.add_node((x, y, h))
            g.add_edge((x, y, h), (x, y, (h + 90) % 360))
            g.add_edge((x, y, h), (x, y, (h + 270) % 360))
            for turn in (0, 90, 180, 270):
                dx, dy = HEADING_VEC[(h + turn) % 360]
                if scene.is_free(x + dx, y + dy):
                    g.add_edge((x, y, h), (x + dx, y + dy, h))
    return g


def test_enclosed_pose_has_two_edges():
    scene = ascii_scene(["###", "#.#", "###"])
    graph = NavGraph(scene)
    assert sorted(a for a, _ in graph.edges[Pose(1, 1, 0)]) == [Action.ROTATE_CCW, Action.ROTATE_CW]


def test_open_pose_has_six_edges():
    graph = NavGraph(open_room(5))
    assert len(graph.edges[Pose(2, 2, 90)]) == 6


def test_move_semantics_relative_to_heading():
    room = open_room(5)
    p = Pose(2, 2, 90)
    assert apply_action(room, p, Action.FORWARD) == (Pose(2, 3, 90), False)
    assert apply_action(room, p, Action.BACK) == (Pose(2, 1, 90), False)
    assert apply_action(room, p, Action.LEFT) == (Pose(1, 2, 90), False)
    assert apply_action(room, p, Action.RIGHT) == (Pose(3, 2, 90), False)
    assert apply_action(room, Pose(3, 2, 0), Action.FORWARD) == (Pose(3, 2, 0), True)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_edge_count_matches_oracle(seed):
    scene = generate_scene(seed, SceneSpec(10, 9, 0.2))
    graph, oracle = NavGraph(scene), oracle_graph(scene)
    assert graph.num_edges() == oracle.number_of_edges()
    assert {(tuple(p), tuple(q)) for p, out in graph.edges.items() for _, q in out} == set(oracle.edges)


def test_geodesic_examples():
    ctx = corridor_ctx()
    goals = {Pose(7, 1, 0)}
    assert geodesic(ctx.scene, (7, 1), goals) == 0
    assert geodesic(ctx.scene, (2, 1), goals) == 5
    with pytest.raises(ValueError):
        geodesic(ctx.scene, (0, 0), goals)


def test_geodesic_unreachable_value():
    scene = ascii_scene(["#######", "#.....#", "#######"])
    assert geodesic(scene, (1, 1), {Pose(5, 1, 0)}) == 4
    assert math.isinf(geodesic(scene, (1, 1), {Pose(9, 9, 0)}))


@pytest.mark.parametrize("seed", [3, 4])
def test_geodesic_matches_bfs_oracle(seed):
    scene = generate_scene(seed, SceneSpec(12, 11, 0.2))
    cells = scene.free_cells()
    g = nx.Graph()
    g.add_nodes_from(cells)
    g.add_edges_from(((x, y), (x + 1, y)) for x, y in cells if scene.is_free(x + 1, y))
    g.add_edges_from(((x, y), (x, y + 1)) for x, y in cells if scene.is_free(x, y + 1))
    goal = cells[len(cells) // 2]
    lengths = nx.single_source_shortest_path_length(g, goal)
    for c in cells:
        assert geodesic(scene, c, {Pose(*goal, 0)}) == lengths[c]


# -- expert -------------------------------------------------------------------

def test_expert_at_goal_is_stop():
    ctx = corridor_ctx()
    info = ctx.goal(1)
    assert expert_shortest_path(ctx.graph, Pose(7, 1, 0), info.goal_poses) == [Action.STOP]


def test_expert_corridor():
    ctx = corridor_ctx()
    info = ctx.goal(1)
    assert info.goal_poses == {Pose(5, 1, 0), Pose(6, 1, 0), Pose(7, 1, 0)}
    path = expert_shortest_path(ctx.graph, Pose(2, 1, 0), info.goal_poses)
    assert path == [Action.FORWARD] * 3 + [Action.STOP]


def test_expert_unreachable_raises():
    scene = ascii_scene(["#####", "#...#", "#####"], objects=[(2, (4, 1))])
    ctx = SceneContext(scene)
    with pytest.raises(UnreachableGoalError):
        expert_shortest_path(ctx.graph, Pose(1, 1, 0), {Pose(9, 9, 0)}, dist={})


def test_expert_length_matches_oracle(contexts):
    ctxs = list(contexts.values())
    oracles = {}
    for i in range(60):
        rng = np.random.default_rng([7, i])
        ctx = ctxs[i % len(ctxs)]
        task = sample_task(ctx, rng)
        g = oracles.setdefault(ctx.scene.id, oracle_graph(ctx.scene))
        best = min(nx.shortest_path_length(g, tuple(task.start), tuple(p))
                   for p in task.goal_poses if nx.has_path(g, tuple(task.start), tuple(p)))
        path = expert_shortest_path(ctx.graph, task.start, task.goal_poses)
        assert len(path) == best + 1 == task.optimal_length


def test_expert_prefers_lowest_action_index():
    # From the centre facing away, BACK (1) and two rotations tie; BACK wins.
    scene = ascii_scene(["#######", "#.....#", "#######"], objects=[(1, (6, 1))])
    ctx = SceneContext(scene)
    ep = start_episode(ctx, ctx.make_task(Pose(1, 1, 180), 1, Pose(5, 1, 0)))
    path = expert_shortest_path(ctx.graph, Pose(1, 1, 180), ctx.goal(1).goal_poses)
    assert path == [Action.BACK, Action.BACK, Action.ROTATE_CCW, Action.ROTATE_CCW, Action.STOP]
    assert expert_action(ep) == Action.BACK


def test_expert_tuple_cases():
    ctx = corridor_ctx()
    ep = start_episode(ctx, ctx.make_task(Pose(3, 1, 0), 1, Pose(7, 1, 0)))
    step(ep, Action.FORWARD)
    a, nxt = expert_tuple(ep)
    assert a == Action.FORWARD
    assert np.array_equal(nxt, ctx.views.observation(Pose(5, 1, 0)))
    step(ep, a)
    a, nxt = expert_tuple(ep)
    assert a == Action.STOP and np.array_equal(nxt, ep.observation)


def test_expert_recomputes_after_deviation():
    ctx = corridor_ctx()
    ep = start_episode(ctx, ctx.make_task(Pose(2, 1, 0), 1, Pose(7, 1, 0)))
    step(ep, Action.ROTATE_CW)
    info = ctx.goal(1)
    assert expert_action(ep) == expert_shortest_path(ctx.graph, ep.pose, info.goal_poses)[0]


def test_fixed_expert_mode_replays_initial_path():
    ctx = corridor_ctx(expert_mode="fixed")
    ep = start_episode(ctx, ctx.make_task(Pose(2, 1, 0), 1, Pose(7, 1, 0)))
    step(ep, Action.ROTATE_CW)
    assert expert_action(ep) == Action.FORWARD


# -- episodes and reward --------------------------------------------------------

def test_step_reward_examples():
    ctx = corridor_ctx()
    ep = start_episode(ctx, ctx.make_task(Pose(2, 1, 0), 1, Pose(7, 1, 0)))
    assert step(ep, Action.FORWARD).reward == STEP_PENALTY
    r = step(ep, Action.FORWARD)
    assert r.reward == pytest.approx(0.99)
    assert step(ep, Action.ROTATE_CW).reward == pytest.approx(-0.01)
    pose = ep.pose
    r = step(ep, Action.FORWARD)  # now facing a wall
    assert r.collided and r.reward == COLLISION_PENALTY and ep.pose == pose
    step(ep, Action.ROTATE_CCW)
    step(ep, Action.FORWARD)
    step(ep, Action.FORWARD)
    r = step(ep, Action.STOP)
    assert r.success and r.done and r.reward == SUCCESS_REWARD


def test_stop_without_success_ends_episode():
    ctx = corridor_ctx()
    ep = start_episode(ctx, ctx.make_task(Pose(2, 1, 0), 1, Pose(7, 1, 0)))
    step(ep, Action.FORWARD)
    r = step(ep, Action.STOP)
    assert r.done and not r.success
    with pytest.raises(EpisodeFinishedError):
        step(ep, Action.FORWARD)


def test_success_needs_goal_in_front_view():
    ctx = corridor_ctx()
    ep = start_episode(ctx, ctx.make_task(Pose(2, 1, 0), 1, Pose(7, 1, 0)))
    for a in [Action.FORWARD] * 5 + [Action.ROTATE_CW]:
        step(ep, a)
    assert ep.geo == 0
    assert not step(ep, Action.STOP).success


def test_episode_times_out():
    ctx = corridor_ctx(max_steps=4)
    ep = start_episode(ctx, ctx.make_task(Pose(2, 1, 0), 1, Pose(7, 1, 0)))
    results = [step(ep, Action.ROTATE_CW) for _ in range(4)]
    assert [r.done for r in results] == [False, False, False, True]


def test_auto_stop_succeeds_on_arrival():
    ctx = corridor_ctx()
    ep = start_episode(ctx, ctx.make_task(Pose(2, 1, 0), 1, Pose(7, 1, 0)), auto_stop=True)
    # (4, 1) is within the success radius of the nearest goal cell.
    results = [step(ep, Action.FORWARD) for _ in range(2)]
    assert ep.pose == Pose(4, 1, 0)
    assert results[-1].success and results[-1].reward == SUCCESS_REWARD
    assert not any(r.success for r in results[:-1])


def collision_free_walk(ctx, task, rng, length):
    """Random non-stop actions that never collide; stops early only if boxed in."""
    ep = start_episode(ctx, task, max_steps=length + 1)
    for _ in range(length):
        legal = [a for a, _ in ctx.graph.edges[ep.pose]]
        step(ep, legal[int(rng.integers(len(legal)))])
    return ep


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), length=st.integers(1, 40))
def test_reward_telescoping(contexts, seed, length):
    rng = np.random.default_rng(seed)
    ctxs = list(contexts.values())
    ctx = ctxs[int(rng.integers(len(ctxs)))]
    ep = collision_free_walk(ctx, sample_task(ctx, rng), rng, length)
    cls = ep.task.goal_class
    expect = ctx.geo(ep.poses[1], cls) - ctx.geo(ep.poses[-1], cls) - 0.01 * length
    assert abs(sum(ep.rewards) - expect) < 1e-9
    assert not any(ep.collisions)


def test_sample_task_is_deterministic(contexts):
    ctx = next(iter(contexts.values()))
    a = sample_task(ctx, np.random.default_rng(3))
    b = sample_task(ctx, np.random.default_rng(3))
    assert a.start == b.start and a.goal_class == b.goal_class
    assert np.array_equal(a.target.vector, b.target.vector)
    assert a.geodesic_start >= 2
