"""mlbridge: the ecosystem-bound edge of the selection pipeline.

Two jobs: turn raw text into the binary embedding wire format through a
pluggable encoder, and execute emitted training recipes on a toy-scale
classifier to demonstrate the consolidation-plus-rehearsal update loss.
"""
from __future__ import annotations

from .embed import EmbedJobSpec, ModelLoadError, embed_texts, load_encoder, register_backend
from .trainer import (
    SoftmaxModel,
    ToyTrainerSpec,
    cross_entropy_and_grad,
    ewc_loss_and_grad,
    fisher_diagonal,
    train_ecda_toy,
)

__version__ = "0.1.0"

__all__ = [
    "EmbedJobSpec",
    "ModelLoadError",
    "SoftmaxModel",
    "ToyTrainerSpec",
    "cross_entropy_and_grad",
    "embed_texts",
    "ewc_loss_and_grad",
    "fisher_diagonal",
    "load_encoder",
    "register_backend",
    "train_ecda_toy",
]
