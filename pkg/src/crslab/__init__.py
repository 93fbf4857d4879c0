"""Online contention resolution for edge arrivals: schemes, estimators, bounds."""

from .constants import ALPHA, alpha, alpha_ell, beta, gamma, rcrs_constants
from .instances import (Instance, MatchResult, Realization, draw_realization,
                        instance_from_json, instance_to_json, load_instance,
                        save_instance, validate)
from .orders import (ArrivalModel, DrawnOrder, draw_order, fixed_order,
                     lex_seeds, phase_based_general, phase_based_tree,
                     uniform_times)
from .schemes import (SchemeSpec, couple_two_round, greedy_scheme,
                      make_exactly_c, reduction_parameters, run_scheme,
                      tree_ocrs_acceptance, tree_ocrs_scheme, vanishing_scheme)
from .analysis import (CovarianceReport, LimitExceeded, SelectionReport,
                       covariance_diagnostics, estimate_selection, exact_oracle,
                       find_low_variance_subset, hardness_bound_check,
                       report_to_csv, upgrade_frequency)
from .gw import (GWTree, estimate_match_prob, estimate_q, estimate_shape_probs,
                 greedy_on_gw, match_prob_closed, q_lex, q_uniform, sample_gw,
                 sample_tree_sizes)
from .stats import binomial_sigma, wilson_interval

__version__ = "0.1.0"

__all__ = [
    "ALPHA", "alpha", "alpha_ell", "beta", "gamma", "rcrs_constants",
    "Instance", "MatchResult", "Realization", "draw_realization",
    "instance_from_json", "instance_to_json", "load_instance", "save_instance",
    "validate",
    "ArrivalModel", "DrawnOrder", "draw_order", "fixed_order", "lex_seeds",
    "phase_based_general", "phase_based_tree", "uniform_times",
    "SchemeSpec", "couple_two_round", "greedy_scheme", "make_exactly_c",
    "reduction_parameters", "run_scheme", "tree_ocrs_acceptance",
    "tree_ocrs_scheme", "vanishing_scheme",
    "CovarianceReport", "LimitExceeded", "SelectionReport",
    "covariance_diagnostics", "estimate_selection", "exact_oracle",
    "find_low_variance_subset", "hardness_bound_check", "report_to_csv",
    "upgrade_frequency",
    "GWTree", "estimate_match_prob", "estimate_q", "estimate_shape_probs",
    "greedy_on_gw", "match_prob_closed", "q_lex", "q_uniform", "sample_gw",
    "sample_tree_sizes",
    "binomial_sigma", "wilson_interval",
    "__version__",
]
