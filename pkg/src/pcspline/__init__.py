"""Bayesian P-splines with penalized-complexity priors on the effective degrees of freedom."""

__version__ = "0.1.0"

from .basis import BSplineBasis, DesignMatrix, evaluate_design, make_basis, uniform_grid
from .dofmap import DofMapping, build_mapping, dof, dof_grid_2d, inverse_dof, marginal_sd_curve
from .errors import (
    DesignSingularError,
    InvalidArgumentsError,
    NotPositiveDefiniteError,
    OutOfRangeError,
    PCSplineError,
    RankDeficientConstraintsError,
)
from .gmrf import (
    CanonicalGaussian,
    IGMRFStructure,
    constrain,
    constrained_logpdf,
    igmrf_logdensity,
    sample_canonical,
    structure_matrix,
)
from .priors import (
    GammaSpec,
    PCPriorSpec,
    check_gumbel_derivation,
    gamma_density_on_d,
    pc_density_on_d,
    pc_tail_mass,
    scale_pc_prior,
)
from .sampler import (
    HyperPriorChoice,
    PosteriorDraws,
    ProposalConfig,
    SmoothBlock,
    beta_full_conditional,
    log_joint_hyper,
    propose_precision,
    proposal_density,
    run_algorithm1,
    run_algorithm2,
)
