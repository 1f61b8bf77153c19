from .episodes import (ExpertPolicy, ModelPolicy, Policy, RandomPolicy, Trajectory, replay_rewards, run_episode,
                       run_suite)
from .metrics import EvalReport, bin_edges, compute_metrics, spl_terms
from .mi import (ContractError, MIRow, bayes_classifier, constant_dynamics, fit_classifier, injective_dynamics,
                 merge_outcomes, mi_bound, mi_exact, mi_sweep, random_dynamics, scene_dynamics)
from .report import (bins_csv, curves_svg, emit_report, mi_csv, parse_report, report_json, validate_svg,
                     write_mi_report)
from .suite import SPLITS, SuiteError, TaskSuite, check_disjoint, difficulty_ratio, is_straight, sample_tasks
