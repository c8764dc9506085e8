"""Desk-scale lab for meta-learned representation transfer across languages."""

from .bilevel import (
    TrainConfig,
    TrainState,
    EncoderTransferProblem,
    evaluate,
    inner_step,
    meta_gradient,
    metaxl_step,
    train,
)
from .data import Dataset, SyntheticTaskSpec, generate_pair
from .encoder import Batch, EncoderConfig, forward, init_encoder_params, task_loss, tokenize
from .errors import ContractError, NumericError, ParseError, ShapeError
from .metrics import (
    RepresentationSet,
    binary_f1,
    cosine_distance,
    hausdorff,
    hausdorff_modified,
    pca2,
    pearson,
    span_f1,
)
from .params import ParamSet, grad
from .rtn import rtn_forward, rtn_init
from .tensor import Tensor, apply, grad_tensors, no_record

__all__ = [
    "Batch",
    "ContractError",
    "Dataset",
    "EncoderConfig",
    "EncoderTransferProblem",
    "NumericError",
    "ParamSet",
    "ParseError",
    "RepresentationSet",
    "ShapeError",
    "SyntheticTaskSpec",
    "Tensor",
    "TrainConfig",
    "TrainState",
    "apply",
    "binary_f1",
    "cosine_distance",
    "evaluate",
    "forward",
    "generate_pair",
    "grad",
    "grad_tensors",
    "hausdorff",
    "hausdorff_modified",
    "init_encoder_params",
    "inner_step",
    "meta_gradient",
    "metaxl_step",
    "no_record",
    "pca2",
    "pearson",
    "rtn_forward",
    "rtn_init",
    "span_f1",
    "task_loss",
    "tokenize",
    "train",
]
