"""Local projection-based update denoising for supervised acoustic system identification."""

from .config import ExperimentConfig, desk_preset, full_preset, load_config
from .engine import lpud_step
from .errors import (
    ConfigurationError,
    DimensionError,
    GeometryError,
    IngestionError,
    InsufficientDataError,
    LpudError,
    NumericalError,
)
from .evidence import (
    EigenfilterBank,
    EvidenceTracker,
    NoiseModel,
    block_log_evidence,
    block_log_evidence_diag,
    build_eigenfilter_bank,
    update_tracker,
)
from .fdaf import FdafParams, FdafState, fdaf_init, fdaf_step
from .harness import TrialResult, run_experiment, run_trial, simulate_observation
from .metrics import erle, system_mismatch_avg, system_mismatch_block, to_db
from .rir import RirDataset, RoomScenario, SourceSector, generate_dataset, sample_source_position, simulate_rir
from .signal import (
    BlockStream,
    FirStack,
    MultichannelSignal,
    apply_fir_stack,
    generate_excitation,
    overlap_save_convolve,
    read_wav,
    unvec_fir,
    vec_fir,
)
from .subspace import (
    AffineSubspaceModel,
    SubspaceUnion,
    fit_local_model,
    kmeans_cluster,
    learn_union,
    project,
    project_update,
)

__version__ = "0.1.0"

__all__ = [
    "AffineSubspaceModel",
    "BlockStream",
    "ConfigurationError",
    "DimensionError",
    "EigenfilterBank",
    "EvidenceTracker",
    "ExperimentConfig",
    "FdafParams",
    "FdafState",
    "FirStack",
    "GeometryError",
    "IngestionError",
    "InsufficientDataError",
    "LpudError",
    "MultichannelSignal",
    "NoiseModel",
    "NumericalError",
    "RirDataset",
    "RoomScenario",
    "SourceSector",
    "SubspaceUnion",
    "TrialResult",
    "apply_fir_stack",
    "block_log_evidence",
    "block_log_evidence_diag",
    "build_eigenfilter_bank",
    "desk_preset",
    "erle",
    "fdaf_init",
    "fdaf_step",
    "fit_local_model",
    "full_preset",
    "generate_dataset",
    "generate_excitation",
    "kmeans_cluster",
    "learn_union",
    "load_config",
    "lpud_step",
    "overlap_save_convolve",
    "project",
    "project_update",
    "read_wav",
    "run_experiment",
    "run_trial",
    "sample_source_position",
    "simulate_observation",
    "simulate_rir",
    "system_mismatch_avg",
    "system_mismatch_block",
    "to_db",
    "unvec_fir",
    "update_tracker",
    "vec_fir",
]
