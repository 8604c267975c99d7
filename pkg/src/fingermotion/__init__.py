"""Finger-motion forecasting at arbitrary horizons.

A causal kinematic feature extractor, a per-channel encoder conditioned on
the horizon ``t`` and a hand-skeleton graph decoder, trained on a
reverse-mode differentiation core written in numpy.
"""
from .checkpoint import load_checkpoint, load_model, save_checkpoint, save_model
from .data import (
    MotionSequence, Samples, SynthSpec, load_motion_csv, load_splits, make_samples,
    synth_dataset, synth_generate, write_motion_csv,
)
from .errors import FingerMotionError
from .evaluator import EvalReport, ablation_suite, evaluate, mae, mse, rmse
from .model import Model, ModelConfig, parameter_count
from .skeleton import HandSkeleton, build_skeleton, normalized_adjacency
from .trainer import TrainConfig, lr_at, train

__version__ = "0.1.0"

__all__ = [
    "EvalReport", "FingerMotionError", "HandSkeleton", "Model", "ModelConfig", "MotionSequence",
    "Samples", "SynthSpec", "TrainConfig", "ablation_suite", "build_skeleton", "evaluate",
    "load_checkpoint", "load_model", "load_motion_csv", "load_splits", "lr_at", "mae",
    "make_samples", "mse", "normalized_adjacency", "parameter_count", "rmse", "save_checkpoint",
    "save_model", "synth_dataset", "synth_generate", "train", "write_motion_csv",
]
