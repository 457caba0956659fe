"""Weak MAP estimation for linear Bayesian inverse problems in coefficient space."""

from .bregman import CostReport, bayes_cost_G, bregman, bregman_hom, compare_map_cm
from .fomin import (
    LogDensityField,
    om_ratio_exact,
    om_ratio_quadrature,
    optimality_residual,
    wmap_inequality_scan,
)
from .posterior import (
    ForwardOperator,
    PosteriorModel,
    cm_estimate,
    objective,
    posterior_log_density,
    posterior_log_deriv,
    sample_posterior_is,
    sample_posterior_rwm,
    small_ball_prob,
    small_ball_ratio,
)
from .priors import (
    BesovPrior,
    GaussianDiagPrior,
    HierarchicalPrior,
    fisher_information,
    j_grad_dir,
    j_value,
    log_density,
    log_deriv_prior,
    sample_prior,
)
from .problems import builtin_problem
from .sampling import MCEstimate, SampleBatch
from .seqspace import BesovWeights, CoeffVec, HierState, basis_direction, besov_norm_p, weighted_inner
from .solvers import SolveOptions, SolveResult, refinement_study, solve_wmap, verify_solution

__version__ = "0.1.0"
