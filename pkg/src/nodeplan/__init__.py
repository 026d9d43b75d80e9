"""Learning-from-demonstration motion planning.

A neural ODE learns a vector field from demonstrated position
trajectories; an online planner tracks the induced target array, correcting
the learned drift with the minimum-norm virtual control certified by a
control Lyapunov function and, when obstacles are present, control barrier
functions solved together as a small quadratic program.
"""
from .core import (DataError, DemonstrationSet, TargetArray, Trajectory,
                   demo_set_from_dict, demo_set_to_dict, load_demo_csv,
                   load_demo_json, resample, save_demo_csv, save_demo_json,
                   validate_demo_set)
from .integrate import (IntegrationError, IntegratorConfig, dopri5,
                        integrate_path, rk4_fixed, step_once)
from .node import (MlpField, TrainConfig, TrainReport, TrainingError,
                   generate_target_array, init_mlp, loss_and_grad, train)
from .cert import (BoxBarrier, CertificateSet, CircleBarrier, Lyapunov,
                   ObstacleSpec, RateFn, certificates, load_obstacles,
                   min_barrier, obstacle_from_dict)
from .qp import (MAX_CONSTRAINTS, QpProblem, QpSolution, build_clf_cbf_qp,
                 solve_clf_cbf, solve_clf_closed_form, solve_dense_qp)
from .planner import (PlannerConfig, PlannerState, PlanningInfeasible,
                      PlanStep, choose_target, plan_step)
from .sim import (Disturbance, RolloutLog, Scenario, load_scenario, run,
                  run_batch)
from .evaluate import (DtwResult, EvalReport, dtw, evaluate_model,
                       mean_pairwise_dtw, pairwise_dtw, parse_split,
                       plot_overlays)
from . import synth

__version__ = "0.1.0"

__all__ = [
    "DataError", "Trajectory", "DemonstrationSet", "TargetArray",
    "validate_demo_set", "resample", "load_demo_json", "save_demo_json",
    "load_demo_csv", "save_demo_csv", "demo_set_to_dict", "demo_set_from_dict",
    "IntegrationError", "IntegratorConfig", "step_once", "rk4_fixed",
    "dopri5", "integrate_path",
    "TrainingError", "MlpField", "TrainConfig", "TrainReport", "init_mlp",
    "loss_and_grad", "train", "generate_target_array",
    "RateFn", "Lyapunov", "CircleBarrier", "BoxBarrier", "CertificateSet",
    "ObstacleSpec", "certificates", "obstacle_from_dict", "load_obstacles",
    "min_barrier",
    "MAX_CONSTRAINTS", "QpProblem", "QpSolution", "solve_dense_qp",
    "solve_clf_closed_form", "build_clf_cbf_qp", "solve_clf_cbf",
    "PlannerConfig", "PlannerState", "PlanStep", "PlanningInfeasible",
    "choose_target", "plan_step",
    "Disturbance", "Scenario", "RolloutLog", "load_scenario", "run",
    "run_batch",
    "DtwResult", "EvalReport", "dtw", "pairwise_dtw", "mean_pairwise_dtw",
    "evaluate_model", "parse_split", "plot_overlays",
    "synth",
]
