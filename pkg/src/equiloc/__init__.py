"""Equity-aware discrete facility location under demand and travel-time uncertainty."""

from .errors import (ConfigurationError, ContractViolation, EquilocError, InfeasibleError,
                     ParseError, UnsupportedModelError, ValidationError)
from .instance import (Instance, Node, build_distance_matrix, derive_demand, from_arrays,
                       load_instance, load_lehigh, rounded_demand, save_instance)
from .metrics import (EquityReport, OutcomeVector, check_pigou_dalton, deviation_from_target,
                      equity_report, gini, mad, range_spread, ratio_min_max, sad, variance)
from .models import (TABLE_MODELS, Assignment, ModelSpec, Objective, Scenario,
                     check_beta_constraint, objective_key, objective_value, outcomes)
from .scenarios import (GeneratorSpec, ScenarioSet, lognormal_from_mean_std, load_scenarios,
                        saa_objective, sample, save_scenarios)
from .solver import (Solution, SolveOptions, inner_assignment, lexicographic_minimax, solve)

__version__ = "0.1.0"
