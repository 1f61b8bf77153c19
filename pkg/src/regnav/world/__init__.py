from .env import (COLLISION_PENALTY, STEP_PENALTY, SUCCESS_REWARD, EpisodeFinishedError, EpisodeState,
                  NavTask, SceneContext, StepResult, Target, WorldConfig, expert_action, expert_tuple,
                  sample_start, sample_task, shaped_reward, start_episode, step)
from .navgraph import (ACTIONS, NUM_ACTIONS, UNREACHABLE, Action, NavGraph, UnreachableGoalError,
                       apply_action, build_nav_graph, expert_shortest_path, geodesic, geodesic_map)
from .render import HEADINGS, Pose, RenderConfig, ViewTable, observe, render_view, view_classes, view_dim
from .scene import (FREE, WALL, Scene, SceneGenerationError, SceneSpec, check_scene, flood_fill,
                    difficulty_groups, generate_scene, generate_scene_sets, load_scene, save_scene,
                    scene_difficulty)
