"""Weakly supervised object localization with learned pairwise similarity."""

from ._pairloc import (
    BlendWeights,
    Dataset,
    PipelineConfig,
    SynthConfig,
    TrainConfig,
    brute_force,
    corloc,
    generate,
    icm,
    iou,
    run,
    selection_accuracy,
    sigmoid_ce,
    trws,
)

__all__ = [
    "BlendWeights",
    "Dataset",
    "PipelineConfig",
    "SynthConfig",
    "TrainConfig",
    "brute_force",
    "corloc",
    "generate",
    "icm",
    "iou",
    "run",
    "selection_accuracy",
    "sigmoid_ce",
    "trws",
]
