"""Codec-fake speech detection with hyperbolic dual-stage fusion."""

__version__ = "0.1.0"

from .geometry import BallConfig, exp_origin, log_origin, mobius_add, project_to_ball
from .alignment import (
    GaussianStats,
    LossBreakdown,
    bd_euclidean,
    bd_hyperbolic,
    bhattacharyya_gaussian,
    fit_gaussian,
)
from .model import ModelConfig, ModelParams, PromptSpec, forward, init_params, predict, prompt_spec
from .trainer import TrainConfig, TrainLog, load_checkpoint, save_checkpoint, train
from .evalsuite import EvalReport, ScoredPrediction, compute_eer, evaluate, mcnemar

__all__ = [
    "BallConfig",
    "exp_origin",
    "log_origin",
    "mobius_add",
    "project_to_ball",
    "GaussianStats",
    "LossBreakdown",
    "fit_gaussian",
    "bhattacharyya_gaussian",
    "bd_euclidean",
    "bd_hyperbolic",
    "ModelConfig",
    "ModelParams",
    "PromptSpec",
    "init_params",
    "forward",
    "predict",
    "prompt_spec",
    "TrainConfig",
    "TrainLog",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "EvalReport",
    "ScoredPrediction",
    "compute_eer",
    "evaluate",
    "mcnemar",
    "__version__",
]
