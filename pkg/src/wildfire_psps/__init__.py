"""Multistage de-energization planning for power grids under wildfire risk."""

from .cuts import (CutRecord, DualSolverParams, LagrangianOracle, benders_cut, generate_cut,
                   lagrangian_cut, lagrangian_value, square_min_cut, strengthened_benders_cut)
from .engine import CutPool, EngineConfig, SolveReport, lower_bound_is_monotone, run
from .evaluation import (EvaluationBreakdown, NominalPlan, compare_restoration, emit_reports,
                         evaluate_out_of_sample, extensive_form_solve, fairness_metrics)
from .formulation import (FormulationOptions, attach_cut, build_extensive, build_node,
                          build_root, relax_binaries)
from .network import (Bus, Generator, Line, Load, PowerNetwork, default_costs, incidence,
                      load_network, save_network)
from .scenarios import (CaParams, DisruptionEvent, DisruptionRealization, ScenarioTree,
                        build_tree, load_tree, save_tree, simulate_paths, validate_tree)
from .solver import LinearModel, SolveOutcome, SolverParams, solve_lp, solve_mip

__version__ = "0.1.0"
