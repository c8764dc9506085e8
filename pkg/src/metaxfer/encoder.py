"""Micro multi-layer transformer encoder over byte tokens.

Stands in for a large multilingual encoder at desk scale: learned token
and position embeddings, post-layer-norm residual blocks, and either a
per-token labeling head or a CLS-pooled sequence classification head.
A hook point after any layer lets a transformation replace that layer's
hidden states during the forward pass.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, ShapeError
from .params import ParamSet
from .tensor import (
    Tensor,
    add,
    cross_entropy,
    embedding_lookup,
    layer_norm,
    matmul,
    mul,
    relu,
    reshape,
    scale,
    slice_,
    softmax,
    transpose,
)

# Byte vocabulary plus specials: 0..255 raw bytes, then PAD/CLS/SEP/reserved.
PAD_ID = 256
CLS_ID = 257
SEP_ID = 258
BASE_VOCAB = 260

TOKEN_LABELING = "token_labeling"
SEQUENCE_CLASSIFICATION = "sequence_classification"

IGNORE_LABEL = -1  # positions excluded from loss and scoring


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 2
    d_ffn: int = 64
    max_len: int = 32
    vocab_size: int = BASE_VOCAB
    task_kind: str = TOKEN_LABELING
    n_labels: int = 5

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ContractError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        if self.max_len < 2:
            raise ContractError("max_len must be >= 2")
        if self.n_labels < 2:
            raise ContractError("n_labels must be >= 2")
        if self.task_kind not in (TOKEN_LABELING, SEQUENCE_CLASSIFICATION):
            raise ContractError(f"unknown task_kind {self.task_kind!r}")


@dataclass
class Batch:
    token_ids: np.ndarray          # (B, T) int64
    attention_mask: np.ndarray     # (B, T) float64 of {0, 1}
    labels: np.ndarray             # (B, T) int64 or (B,) int64
    role: str                      # "source" | "target"


def tokenize(text: bytes | str, max_len: int) -> np.ndarray:
    """[CLS] + raw bytes (truncated to max_len - 2) + [SEP]."""
    if isinstance(text, str):
        text = text.encode("utf-8")
    body = list(text[: max_len - 2])
    return np.array([CLS_ID] + body + [SEP_ID], dtype=np.int64)


def wrap_tokens(tokens: np.ndarray, max_len: int) -> np.ndarray:
    """Same framing as tokenize for an already-numeric byte id sequence."""
    body = np.asarray(tokens, dtype=np.int64)[: max_len - 2]
    return np.concatenate(([CLS_ID], body, [SEP_ID]))


def make_batch(
    sequences: list[np.ndarray],
    labels: list,
    role: str,
    task_kind: str,
    max_len: int,
) -> Batch:
    """Collate already-tokenized id sequences; pads to the batch maximum.

    Token-level label arrays align with the raw bytes (CLS/SEP/PAD get
    IGNORE_LABEL); sequence-level labels are one int per example.
    """
    seqs = []
    labs = []
    for i, ids in enumerate(sequences):
        ids = np.asarray(ids, dtype=np.int64)[:max_len]
        seqs.append(ids)
        if task_kind == TOKEN_LABELING:
            body = np.asarray(labels[i], dtype=np.int64)[: max_len - 2]
            lab = np.concatenate(([IGNORE_LABEL], body, [IGNORE_LABEL]))
            labs.append(lab[: len(ids)])
    width = max(len(s) for s in seqs)
    n = len(seqs)
    token_ids = np.full((n, width), PAD_ID, dtype=np.int64)
    mask = np.zeros((n, width))
    for i, s in enumerate(seqs):
        token_ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    if task_kind == TOKEN_LABELING:
        lab_arr = np.full((n, width), IGNORE_LABEL, dtype=np.int64)
        for i, la in enumerate(labs):
            lab_arr[i, : len(la)] = la
    else:
        lab_arr = np.asarray(labels, dtype=np.int64)
    return Batch(token_ids=token_ids, attention_mask=mask, labels=lab_arr, role=role)


def init_encoder_params(cfg: EncoderConfig, seed: int) -> ParamSet:
    """Parameter count is a pure function of the config; values of the seed."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(17,)))

    def u(fan_in, shape):
        s = 1.0 / np.sqrt(fan_in)
        return Tensor(rng.uniform(-s, s, size=shape), requires_grad=True)

    d, f = cfg.d_model, cfg.d_ffn
    items = {
        "embed.tok": Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(d), size=(cfg.vocab_size, d)), requires_grad=True
        ),
        "embed.pos": Tensor(
            rng.normal(0.0, 1.0 / np.sqrt(d), size=(cfg.max_len, d)), requires_grad=True
        ),
        "head.w": u(d, (d, cfg.n_labels)),
        "head.b": Tensor(np.zeros(cfg.n_labels), requires_grad=True),
    }
    for i in range(cfg.n_layers):
        p = f"layers.{i}"
        for name in ("wq", "wk", "wv", "wo"):
            items[f"{p}.attn.{name}"] = u(d, (d, d))
        for name in ("bq", "bk", "bv", "bo"):
            items[f"{p}.attn.{name}"] = Tensor(np.zeros(d), requires_grad=True)
        items[f"{p}.ffn.w1"] = u(d, (d, f))
        items[f"{p}.ffn.b1"] = Tensor(np.zeros(f), requires_grad=True)
        items[f"{p}.ffn.w2"] = u(f, (f, d))
        items[f"{p}.ffn.b2"] = Tensor(np.zeros(d), requires_grad=True)
        for ln in ("ln1", "ln2"):
            items[f"{p}.{ln}.gain"] = Tensor(np.ones(d), requires_grad=True)
            items[f"{p}.{ln}.bias"] = Tensor(np.zeros(d), requires_grad=True)
    return ParamSet(items)


def _attention(theta: ParamSet, prefix: str, h: Tensor, mask_bias: Tensor, cfg: EncoderConfig) -> Tensor:
    b, t, d = h.shape
    hd = d // cfg.n_heads

    def heads(x):
        return transpose(reshape(x, (b, t, cfg.n_heads, hd)), (0, 2, 1, 3))

    q = heads(add(matmul(h, theta[f"{prefix}.wq"]), theta[f"{prefix}.bq"]))
    k = heads(add(matmul(h, theta[f"{prefix}.wk"]), theta[f"{prefix}.bk"]))
    v = heads(add(matmul(h, theta[f"{prefix}.wv"]), theta[f"{prefix}.bv"]))
    scores = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(hd))
    attn = softmax(add(scores, mask_bias))
    ctx = reshape(transpose(matmul(attn, v), (0, 2, 1, 3)), (b, t, d))
    return add(matmul(ctx, theta[f"{prefix}.wo"]), theta[f"{prefix}.bo"])


def _affine_norm(theta: ParamSet, prefix: str, h: Tensor) -> Tensor:
    return add(mul(layer_norm(h), theta[f"{prefix}.gain"]), theta[f"{prefix}.bias"])


RtnHook = tuple[int, Callable[[Tensor], Tensor]]


def forward(
    theta: ParamSet,
    cfg: EncoderConfig,
    batch: Batch,
    rtn_hook: Optional[RtnHook] = None,
) -> tuple[Tensor, list[Tensor]]:
    """Run the encoder; returns (logits, hidden states per layer).

    hidden[0] is the embedding output and hidden[i] the output of layer i.
    When a hook (i, fn) is given, hidden state i is replaced by fn(hidden_i)
    for all positions before the remaining layers run.
    """
    if rtn_hook is not None:
        idx = rtn_hook[0]
        if not 0 <= idx <= cfg.n_layers:
            raise ContractError(
                f"hook index {idx} outside [0, {cfg.n_layers}]"
            )
    ids = batch.token_ids
    b, t = ids.shape
    if t > cfg.max_len:
        raise ShapeError(f"sequence length {t} exceeds max_len {cfg.max_len}")

    pos = slice_(theta["embed.pos"], (slice(0, t),))
    h = add(embedding_lookup(theta["embed.tok"], ids), pos)

    mask_bias = Tensor(
        np.ascontiguousarray(
            np.broadcast_to(
                (batch.attention_mask[:, None, None, :] - 1.0) * 1e9,
                (b, cfg.n_heads, t, t),
            )
        )
    )

    def maybe_hook(i, x):
        if rtn_hook is not None and rtn_hook[0] == i:
            return rtn_hook[1](x)
        return x

    h = maybe_hook(0, h)
    hiddens = [h]
    for i in range(cfg.n_layers):
        p = f"layers.{i}"
        h = _affine_norm(theta, f"{p}.ln1", add(h, _attention(theta, f"{p}.attn", h, mask_bias, cfg)))
        ffn = add(
            matmul(relu(add(matmul(h, theta[f"{p}.ffn.w1"]), theta[f"{p}.ffn.b1"])), theta[f"{p}.ffn.w2"]),
            theta[f"{p}.ffn.b2"],
        )
        h = _affine_norm(theta, f"{p}.ln2", add(h, ffn))
        h = maybe_hook(i + 1, h)
        hiddens.append(h)

    if cfg.task_kind == TOKEN_LABELING:
        logits = add(matmul(h, theta["head.w"]), theta["head.b"])
    else:
        cls = reshape(slice_(h, (slice(None), slice(0, 1))), (b, cfg.d_model))
        logits = add(matmul(cls, theta["head.w"]), theta["head.b"])
    return logits, hiddens


def task_loss(logits: Tensor, batch: Batch, cfg: EncoderConfig) -> Tensor:
    """Mean cross-entropy over unmasked labeled positions, or over sequences."""
    if cfg.task_kind == TOKEN_LABELING:
        b, t, k = logits.shape
        flat = reshape(logits, (b * t, k))
        labels = batch.labels.reshape(-1)
        weights = (batch.attention_mask.reshape(-1) > 0) & (labels != IGNORE_LABEL)
        return cross_entropy(flat, labels, weights.astype(np.float64))
    return cross_entropy(logits, batch.labels)


def loss_weight(batch: Batch, cfg: EncoderConfig) -> float:
    """Number of positions (or sequences) the mean loss averages over."""
    if cfg.task_kind == TOKEN_LABELING:
        return float(
            ((batch.attention_mask > 0) & (batch.labels != IGNORE_LABEL)).sum()
        )
    return float(batch.labels.shape[0])
