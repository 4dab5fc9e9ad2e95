"""Reliable one-sided learning of halfspaces under Gaussian marginals."""

from .chow import ChowTensor, DirectionParams, candidate_direction, estimate_chow, extract_subspace, flatten
from .errors import (
    ArgumentError,
    BandTooThinError,
    InfeasibleError,
    PartialSetError,
    ReliableError,
    TensorSizeError,
    UnsupportedError,
)
from .evaluation import ErrorReport, SweepSpec, estimate_errors, estimate_opt, run_sweep
from .gaussian import (
    QuadratureRule,
    SymmetricTensor,
    gauss_hermite_rule,
    gaussian_quantile,
    hermite_tensor,
    hermite_univariate,
    sign_matching_poly,
)
from .instances import (
    CorruptionPolicy,
    DiscretizedFunction,
    Halfspace,
    HalfspaceOracle,
    IndependentLabelOracle,
    LabeledOracle,
    corrupt,
    embed_hard_instance,
    near_orthogonal_set,
    sample_clean,
    solve_moment_matched_g,
    verify_hard_instance,
)
from .learner import (
    Hypothesis,
    LearnerConfig,
    LearnResult,
    SandwichHypothesis,
    band_condition,
    check_false_positive,
    desk_config,
    easycase_learn,
    random_walk_learn,
    reliable_learn,
    sandwich_combine,
    update_direction,
)

__version__ = "0.1.0"
