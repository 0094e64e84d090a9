"""Rejection ABC and AABC for limited-generative models."""

from .abc import AcceptanceRule, PosteriorSample, distance, run_abc, select_accepted
from .model import (
    ReferenceSet,
    build_reference_set,
    load_reference_set,
    make_model,
    save_reference_set,
)
from .rand import SeedSpec
from .surrogate import nearest_parameter, resample_dataset, run_aabc, run_aabc_param_only

__all__ = [
    "AcceptanceRule",
    "PosteriorSample",
    "ReferenceSet",
    "SeedSpec",
    "build_reference_set",
    "distance",
    "load_reference_set",
    "make_model",
    "nearest_parameter",
    "resample_dataset",
    "run_aabc",
    "run_aabc_param_only",
    "run_abc",
    "save_reference_set",
    "select_accepted",
]

__version__ = "0.1.0"
