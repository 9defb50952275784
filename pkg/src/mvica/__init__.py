"""MultiView ICA: shared independent sources from several noisy views."""

from .baselines import group_ica, infomax_ica, pca, pca_group_ica
from .initialization import diagonal_scaling, init_pipeline, permica
from .metrics import align, hungarian, r2_score, reconstruction_error, time_segment_matching
from .model import (
    Contrast,
    DimensionError,
    FitResult,
    MultiViewDataset,
    SingularMatrixError,
    SolverConfig,
    UnmixingSet,
    ValidationError,
    logcosh,
    negative_log_likelihood,
    per_subject_loss,
    shared_estimate,
)
from .simgen import SynthSpec, gen_sensor_noise_model, gen_shared_model
from .solver import fit, relative_gradient, stability_diagnostic

__version__ = "0.1.0"
