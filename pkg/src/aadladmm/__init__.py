"""Gradient-free MLP training by Anderson-accelerated alternating minimization.

The package splits network training into per-block convex subproblems tied
together by a quadratic penalty, treats one full sweep of block updates as a
fixed-point map, and accelerates the outer iteration with safeguarded
limited-memory type-I Anderson acceleration.  Baseline optimizers (gradient
descent, Adam, acceleration-off alternating minimization) and a benchmarking
CLI round out the toolkit.
"""

from .anderson import (
    AAConfig,
    AAState,
    aa_step,
    init_aa_state,
    picard_iterate,
    solve_fixed_point,
)
from .baselines import BaselineConfig, adam_train, gd_train, plain_altmin_train
from .data import Dataset, load_csv, normalize_features, split, synth_blobs, write_csv
from .model import NetworkState, ProblemSpec, Regularizer, objective, total_residual_norm
from .trainer import TrainConfig, TrainResult, epoch_map, evaluate, flatten, train, unflatten

__version__ = "0.1.0"

__all__ = [
    "AAConfig", "AAState", "aa_step", "init_aa_state", "picard_iterate", "solve_fixed_point",
    "BaselineConfig", "adam_train", "gd_train", "plain_altmin_train",
    "Dataset", "load_csv", "normalize_features", "split", "synth_blobs", "write_csv",
    "NetworkState", "ProblemSpec", "Regularizer", "objective", "total_residual_norm",
    "TrainConfig", "TrainResult", "epoch_map", "evaluate", "flatten", "train", "unflatten",
    "__version__",
]
