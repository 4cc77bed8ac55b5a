"""Prompt-tuned multi-modal transformer over 3D volumes and clinical attributes.

A self-contained float64 autodiff engine drives a two-encoder architecture
(staged paired-attention visual encoder, prompted tabular transformer, class
token fusion) through a two-stage transfer protocol: full pretraining on one
task, then fine-tuning on a second task by optimizing only prompt tokens, the
global prompt transform, and the classifier head over a frozen backbone.
"""

from .autodiff import Tensor, no_grad
from .config import ExperimentConfig, load_config, reference_config
from .metrics import EvalResult, auc, bacc, f1
from .model import ModelConfig, build_model, get_strategy
from .optim import AdamW, ParameterStore, grad_check
from .synth import SynthConfig, generate, stratified_split
from .train import TrainConfig, build_freeze_mask, evaluate, finetune, pretrain

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "EvalResult",
    "ExperimentConfig",
    "ModelConfig",
    "ParameterStore",
    "SynthConfig",
    "Tensor",
    "TrainConfig",
    "auc",
    "bacc",
    "build_freeze_mask",
    "build_model",
    "evaluate",
    "f1",
    "finetune",
    "generate",
    "get_strategy",
    "grad_check",
    "load_config",
    "no_grad",
    "pretrain",
    "reference_config",
    "stratified_split",
    "__version__",
]
