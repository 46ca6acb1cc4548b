"""Tumor growth simulation and ranking-based evaluation toolkit."""

from .fields import (
    InvasionMap,
    ScalarField,
    Segmentation,
    TissueLabel,
    TissueModel,
    VoxelGrid,
    boundary_voxels,
    NEVER_INVADED,
)
from .grv import GrvError, read_grv, read_volume, write_grv, write_volume
from .growth import (
    GaussianSeed,
    InstabilityError,
    ModelParams,
    SegmentationSeed,
    SimulationSettings,
    assemble_diffusion,
    initialize_density,
    simulate,
    stable_dt,
    step_density,
)
from .eikonal import SpeedMap, fast_march, speed_from_params
from .fitting import FitConfig, FitResult, fit_seed, powell_minimize, seed_objective
from .ranking import (
    AGREEMENT_SENTINEL,
    EvalReport,
    PRCurve,
    average_precision,
    evaluate_ranking,
    local_agreement,
    pr_curve,
    volume_matched_threshold,
    write_pr_csv,
)
from .schemes import (
    CaseData,
    CorrelationReport,
    DEFAULT_PARAM_SETS,
    SweepRow,
    evaluate_bidirectional,
    evaluate_forward,
    fit_vs_prediction_report,
    one_sample_t_test,
    parameter_sweep,
    spearman_rho,
)
from .phantom import (
    ErosionDilation,
    GroundTruth,
    PhantomSpec,
    RandomFlip,
    generate_case,
    perturb_case,
)

__version__ = "0.1.0"
