"""Bottlenecked two-layer transformation applied to hidden states.

The map is h -> w2' relu(w1' h + b1) + b2 with w1: (d, r), w2: (r, d) and
r < d, applied independently at every sequence position. It replaces the
hidden state it is given; a residual variant exists for ablation only.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError
from .params import ParamSet
from .tensor import Tensor, add, matmul, relu, reshape


def rtn_init(d: int, r: int, seed: int) -> ParamSet:
    """Random init: w1 ~ U[-1/sqrt(d), 1/sqrt(d)], w2 ~ U[-1/sqrt(r), 1/sqrt(r)],
    zero biases. Small nonzero weights keep the replaced stream alive."""
    if not 0 < r < d:
        raise ContractError(f"bottleneck requires 0 < r < d, got r={r}, d={d}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(90,)))
    s1 = 1.0 / np.sqrt(d)
    s2 = 1.0 / np.sqrt(r)
    return ParamSet(
        {
            "w1": Tensor(rng.uniform(-s1, s1, size=(d, r)), requires_grad=True),
            "b1": Tensor(np.zeros(r), requires_grad=True),
            "w2": Tensor(rng.uniform(-s2, s2, size=(r, d)), requires_grad=True),
            "b2": Tensor(np.zeros(d), requires_grad=True),
        }
    )


def rtn_forward(phi: ParamSet, h: Tensor, residual: bool = False) -> Tensor:
    """Transform hidden states (..., d) -> (..., d)."""
    d = phi["w1"].shape[0]
    if h.shape[-1] != d:
        raise ShapeError(f"rtn_forward: last axis {h.shape} does not match d={d}")
    x = reshape(h, (1,) + h.shape) if h.ndim == 1 else h
    z = relu(add(matmul(x, phi["w1"]), phi["b1"]))
    out = add(matmul(z, phi["w2"]), phi["b2"])
    if residual:
        out = add(x, out)
    return reshape(out, h.shape) if h.ndim == 1 else out
