"""Surrogate model zoo: LR, QP, KNN, IDW, DT, RF, GP and RBF for regression and 0/1 classification."""

from surrex.surrogates.model import (
    KINDS,
    NATIVE_VARIANCE,
    TASKS,
    FitOptions,
    Prediction,
    TrainedSurrogate,
    conformal_calibrate,
    estimate_replicate_noise,
    mdi_importance,
    record_noise,
    train,
)

__all__ = [
    "KINDS", "NATIVE_VARIANCE", "TASKS", "FitOptions", "Prediction", "TrainedSurrogate",
    "conformal_calibrate", "estimate_replicate_noise", "mdi_importance", "record_noise", "train",
]
