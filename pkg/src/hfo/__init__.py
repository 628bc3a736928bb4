"""Simulation and analysis toolkit for sampled-data feedback optimization of
linear time-invariant plants."""

__version__ = "0.1.0"

from .hybrid import (
    HybridArc,
    HybridTime,
    JumpRecord,
    JumpStats,
    arc_lookup,
    check_non_zeno,
    jump_stats,
    next_event,
    simulate,
)
from .model import (
    Ball,
    Box,
    HybridFOModel,
    JumpPolicy,
    ModelParams,
    Objective,
    Plant,
    State,
    Timers,
    grad_u_phi,
    jump,
    jump_g1,
    jump_g2,
    make_state,
    phi,
    project,
    steady_state_gain,
    strict_initial_state,
    validate,
)
from .analysis import (
    Constants,
    bound_thm1,
    bound_thm2,
    check_bound,
    constants,
    dist_to_A,
    estimate_M,
    fixed_point_z,
    rate_check,
    reconstruct_x,
    solve_optimal,
)
from .robustness import (
    ClosenessResult,
    Perturbation,
    closeness,
    iota_magnitude,
    perturbed_model,
    robustness_sweep,
)
from .config import ScenarioConfig, config_to_dict, parse_config
