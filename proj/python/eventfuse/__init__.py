"""Event-driven decision-level sensor fusion."""

from ._eventfuse import (
    ConflictError,
    Error,
    ParseError,
    ReferenceError,
    TrainingError,
    ValidationError,
    blend_joint,
    compute_roc,
    dempster_combine,
    fuse,
    gen_radar_dataset,
    gen_seismic_acoustic_dataset,
    joint_entropy,
    max_mi_joint,
    min_mi_joint,
    pignistic,
    run_experiment,
    svm_predict,
    train_svm,
)

__all__ = [
    "ConflictError",
    "Error",
    "ParseError",
    "ReferenceError",
    "TrainingError",
    "ValidationError",
    "blend_joint",
    "compute_roc",
    "dempster_combine",
    "fuse",
    "gen_radar_dataset",
    "gen_seismic_acoustic_dataset",
    "joint_entropy",
    "max_mi_joint",
    "min_mi_joint",
    "pignistic",
    "run_experiment",
    "svm_predict",
    "train_svm",
]
