"""Bayesian inference for multinomial models with convex linear inequality
constraints, in either facet (``A theta <= b``) or vertex (convex hull)
representation: truncated-Dirichlet Gibbs sampling, encompassing Bayes
factors with Monte Carlo uncertainty, and posterior-predictive model checks.
"""

from .errors import (
    DimensionError,
    EmptyIntervalError,
    IneqmnError,
    InfeasibleError,
    ModelFileError,
    NumericError,
)
from .evidence import (
    CountResult,
    EvidenceResult,
    automatic_count,
    count_in_region,
    encompassing_bf,
    proportion_draws,
    stepwise_count,
)
from .fit import PppResult, ppp_value, x2_statistic
from .geometry import (
    Interval,
    LpProblem,
    LpResult,
    conditional_bounds_ab,
    conditional_bounds_indicator,
    conditional_bounds_v,
    in_convex_hull,
    solve_lp,
)
from .io import ModelSpec, parse_model, save_model
from .model import (
    AbPolytope,
    CountData,
    DirichletPrior,
    ItemLayout,
    MixtureWeights,
    VPolytope,
    complete_theta,
    log_likelihood,
    posterior_shapes,
    sample_unconstrained,
    satisfies_ab,
    satisfies_ab_batch,
    theta_from_full,
    validate_theta,
)
from .sampler import (
    Chain,
    ConstraintModel,
    effective_sample_size,
    gibbs_chain,
    map_estimate,
    run_parallel_chains,
    sample_truncated_beta,
)

__version__ = "0.1.0"

__all__ = [
    "AbPolytope", "Chain", "ConstraintModel", "CountData", "CountResult",
    "DimensionError", "DirichletPrior", "EmptyIntervalError", "EvidenceResult",
    "IneqmnError", "InfeasibleError", "Interval", "ItemLayout", "LpProblem",
    "LpResult", "MixtureWeights", "ModelFileError", "ModelSpec", "NumericError",
    "PppResult", "VPolytope", "automatic_count", "complete_theta",
    "conditional_bounds_ab", "conditional_bounds_indicator",
    "conditional_bounds_v", "count_in_region", "effective_sample_size",
    "encompassing_bf", "gibbs_chain", "in_convex_hull", "log_likelihood",
    "map_estimate", "parse_model", "posterior_shapes", "ppp_value",
    "proportion_draws", "run_parallel_chains", "sample_truncated_beta",
    "sample_unconstrained", "satisfies_ab", "satisfies_ab_batch", "save_model",
    "solve_lp", "stepwise_count", "theta_from_full", "validate_theta",
    "x2_statistic",
]
