"""Divide-and-conquer marginal particle filtering with benchmark tooling."""

from .core import (
    DacError,
    AllWeightsDegenerate,
    InvalidProbabilities,
    InvalidParams,
    CapExceeded,
    AuditFailed,
    BisectionFailed,
    NotPositiveDefinite,
    SingularInnovation,
    SchemaMismatch,
    RngStream,
    split_stream,
    NodeCloud,
    NodeState,
    StateSpaceModel,
    AuxiliaryFamily,
    normalize_log_weights,
    effective_sample_size,
    log_mean_exp,
)
from .tree import DecompositionTree, build_chain_tree, build_lattice_tree, bottom_up_levels
from .resampling import (
    MixtureBatch,
    MergeStrategy,
    FunctionPairWeights,
    stratified_resample,
    build_identity_block,
    add_permutation_block,
    merge_full,
    merge_lightweight,
    merge_adaptive,
    merge_linear,
    theta_cap,
)
from .metrics import (
    MarginalTruth,
    MetricRow,
    w1_empirical_vs_gaussian,
    ks_empirical_vs_gaussian,
    mse_of_means,
    rmse_of_means,
)
from .lgssm import (
    LgssmParams,
    LgssmModel,
    LgssmAux,
    build_lgssm,
    log_mixture_weight_lgssm,
    simulate_lgssm,
)
from .spatial import (
    SpatialParams,
    SpatialModel,
    SpatialAux,
    build_spatial,
    log_mixture_weight_spatial,
    simulate_spatial,
)
from .oracles import (
    KalmanState,
    kalman_step,
    kalman_filter,
    bootstrap_pf_first_step,
    bootstrap_pf_step,
    run_bootstrap_pf,
)
from .filtering import (
    DacConfig,
    TemperingConfig,
    TemperDiagnostics,
    FilterState,
    leaf_step,
    log_mixture_weight,
    dac_step,
    temper_node,
    unnormalized_root_weight_audit,
    run_dac_filter,
)
from .bench import ExperimentConfig, run_experiment, run_preset, summarize, PRESET_NAMES

__version__ = "0.1.0"
