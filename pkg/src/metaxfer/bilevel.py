"""One-step-lookahead bilevel training and its single-level baselines.

The outer parameters phi (transformation network) are trained by
differentiating the target loss through a single SGD update of the base
parameters theta on a transformed source batch:

    theta' = theta - alpha * grad_theta L_source(theta, phi)
    phi   <- phi - beta * grad_phi L_target(theta'(phi))

Both updates use plain SGD; the meta-gradient can be computed three ways
(unrolled, a second backward pass through the inner-gradient graph, or a
DARTS-style central-difference Hessian-vector approximation), which agree
for a single inner step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol

import numpy as np

from .encoder import (
    IGNORE_LABEL,
    SEQUENCE_CLASSIFICATION,
    TOKEN_LABELING,
    Batch,
    EncoderConfig,
    forward,
    init_encoder_params,
    loss_weight,
    make_batch,
    task_loss,
    wrap_tokens,
)
from .errors import ContractError, NumericError
from .metrics import binary_f1, macro_f1, span_prf
from .params import ParamSet, grad
from .rtn import rtn_forward, rtn_init
from .tensor import Tensor, add, mul, no_record, power, scale, sub, sum_all

METHODS = ("target_only", "jt", "jt_rtn", "metaxl")
META_GRAD_MODES = ("unrolled", "analytic_expansion", "fd_hvp")


@dataclass
class TrainConfig:
    alpha: float = 0.05
    beta: float = 0.05
    placement: Optional[int] = None     # None = after the last layer
    bottleneck_r: int = 12
    steps: int = 800
    batch_source: int = 8
    batch_target: int = 8
    seed: int = 0
    method: str = "metaxl"
    meta_grad_mode: str = "unrolled"
    clip_norm: Optional[float] = 5.0
    rtn_residual: bool = False
    eval_every: int = 50
    fresh_inner_batch: bool = False

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ContractError("learning rates must be positive")
        if self.method not in METHODS:
            raise ContractError(f"unknown method {self.method!r}")
        if self.meta_grad_mode not in META_GRAD_MODES:
            raise ContractError(f"unknown meta_grad_mode {self.meta_grad_mode!r}")
        if self.steps <= 0 or self.batch_source <= 0 or self.batch_target <= 0:
            raise ContractError("steps and batch sizes must be positive")


# Documented full-scale defaults (not runnable at desk scale): learning
# rate 3e-5 for the base model, outer rate tuned over {3e-5, 1e-6, 1e-7},
# batch 16 (token labeling) / 12 (sequence classification), 20 epochs,
# bottleneck 384 / 192 on a 768-dim encoder.
PAPER_MODE = {
    "token_labeling": {
        "alpha": 3e-5,
        "beta_grid": (3e-5, 1e-6, 1e-7),
        "batch_size": 16,
        "max_len": 200,
        "bottleneck_r": 384,
        "epochs": 20,
    },
    "sequence_classification": {
        "alpha": 3e-5,
        "beta_grid": (3e-5, 1e-6, 1e-7),
        "batch_size": 12,
        "max_len": 256,
        "bottleneck_r": 192,
        "epochs": 20,
    },
}


class Problem(Protocol):
    def source_loss(self, theta: ParamSet, phi: ParamSet, batch) -> Tensor: ...
    def target_loss(self, theta: ParamSet, batch) -> Tensor: ...


class EncoderTransferProblem:
    """Source batches go through the transformation hook; target batches
    use the plain encoder."""

    def __init__(self, enc_cfg: EncoderConfig, placement: Optional[int], residual: bool = False):
        if placement is not None and not 0 <= placement <= enc_cfg.n_layers:
            raise ContractError(
                f"placement {placement} outside [0, {enc_cfg.n_layers}]"
            )
        self.enc_cfg = enc_cfg
        self.placement = placement
        self.residual = residual

    def source_loss(self, theta: ParamSet, phi: ParamSet, batch: Batch) -> Tensor:
        hook = None
        if self.placement is not None:
            hook = (self.placement, lambda h: rtn_forward(phi, h, self.residual))
        logits, _ = forward(theta, self.enc_cfg, batch, rtn_hook=hook)
        return task_loss(logits, batch, self.enc_cfg)

    def target_loss(self, theta: ParamSet, batch: Batch) -> Tensor:
        logits, _ = forward(theta, self.enc_cfg, batch)
        return task_loss(logits, batch, self.enc_cfg)


def _check_role(batch, expected: str):
    role = getattr(batch, "role", None)
    if role is not None and role != expected:
        raise ContractError(f"batch role {role!r}, expected {expected!r}")


def clip_factor(grads: ParamSet, max_norm: Optional[float]) -> Tensor:
    """Global-norm clip as a scalar tensor.

    Returns constant 1 when inactive; when active the factor is built from
    the gradient tensors, so differentiating through a clipped update stays
    exact.
    """
    if max_norm is None:
        return Tensor(1.0)
    total = None
    for g in grads.values():
        s = sum_all(mul(g, g))
        total = s if total is None else add(total, s)
    norm = float(np.sqrt(total.data))
    if norm <= max_norm or norm == 0.0:
        return Tensor(1.0)
    return scale(power(total, -0.5), max_norm)


@dataclass
class InnerStep:
    theta_prime: ParamSet       # graph nodes depending on phi when create_graph
    loss: Tensor
    grads: ParamSet
    clip: Tensor


def inner_step(
    problem: Problem,
    theta: ParamSet,
    phi: ParamSet,
    source_batch,
    alpha: float,
    clip_norm: Optional[float] = None,
    create_graph: bool = True,
) -> InnerStep:
    """One SGD update of theta on the source loss; theta is not mutated."""
    _check_role(source_batch, "source")
    loss = problem.source_loss(theta, phi, source_batch)
    grads = grad(loss, theta, create_graph=create_graph)
    c = clip_factor(grads, clip_norm)
    theta_prime = ParamSet(
        {k: sub(theta[k], scale(mul(grads[k], c), alpha)) for k in theta}
    )
    return InnerStep(theta_prime=theta_prime, loss=loss, grads=grads, clip=c)


@dataclass
class MetaGradInfo:
    source_loss: float
    target_loss: float
    theta_prime: dict[str, np.ndarray]


def meta_gradient(
    problem: Problem,
    theta: ParamSet,
    phi: ParamSet,
    source_batch,
    target_batch,
    alpha: float,
    mode: str = "unrolled",
    clip_norm: Optional[float] = None,
) -> tuple[ParamSet, MetaGradInfo]:
    """Gradient of the lookahead target loss with respect to phi."""
    _check_role(target_batch, "target")
    if mode not in META_GRAD_MODES:
        raise ContractError(f"unknown meta_grad_mode {mode!r}")

    if mode in ("unrolled", "analytic_expansion"):
        step = inner_step(problem, theta, phi, source_batch, alpha, clip_norm, create_graph=True)
        loss_t = problem.target_loss(step.theta_prime, target_batch)
        if mode == "unrolled":
            gphi = grad(loss_t, phi)
        else:
            names = list(theta)
            v = grad(loss_t, ParamSet({k: step.theta_prime[k] for k in names}))
            dot = None
            for k in names:
                term = sum_all(mul(step.grads[k], Tensor(v[k].data)))
                dot = term if dot is None else add(dot, term)
            gphi = grad(mul(dot, step.clip), phi).map(lambda g: scale(g, -alpha))
        info = MetaGradInfo(
            source_loss=step.loss.item(),
            target_loss=loss_t.item(),
            theta_prime={k: step.theta_prime[k].data for k in step.theta_prime},
        )
        return gphi, info

    # fd_hvp: central finite difference of grad_phi L_source at theta +- eps*v,
    # v = grad_theta L_target(theta').
    step = inner_step(problem, theta, phi, source_batch, alpha, clip_norm, create_graph=False)
    theta_prime = ParamSet.from_arrays({k: step.theta_prime[k].data for k in step.theta_prime})
    loss_t = problem.target_loss(theta_prime, target_batch)
    v = grad(loss_t, theta_prime)
    vnorm = float(np.sqrt(sum(float((g.data ** 2).sum()) for g in v.values())))
    info = MetaGradInfo(
        source_loss=step.loss.item(),
        target_loss=loss_t.item(),
        theta_prime={k: t.data for k, t in theta_prime.items()},
    )
    if vnorm == 0.0:
        return phi.map(lambda p: Tensor(np.zeros(p.shape))), info
    eps = 0.01 / vnorm
    c = float(step.clip.data)

    def phi_grads_at(sign: float) -> ParamSet:
        shifted = ParamSet.from_arrays(
            {k: theta[k].data + sign * eps * v[k].data for k in theta},
            requires_grad=False,
        )
        loss_s = problem.source_loss(shifted, phi, source_batch)
        return grad(loss_s, phi)

    gp = phi_grads_at(+1.0)
    gm = phi_grads_at(-1.0)
    gphi = ParamSet(
        {
            k: Tensor(-alpha * c * (gp[k].data - gm[k].data) / (2 * eps))
            for k in phi
        }
    )
    return gphi, info


@dataclass
class TrainState:
    theta: ParamSet
    phi: Optional[ParamSet]
    step: int = 0
    history: list = field(default_factory=list)


def metaxl_step(
    state: TrainState,
    source_batch,
    target_batch,
    cfg: TrainConfig,
    problem: Problem,
    lookahead_batch=None,
) -> TrainState:
    """Algorithm step: update theta on the source batch with the current phi,
    then update phi with the meta-gradient whose lookahead is that same
    one-step update. State changes only after everything computed finitely.
    """
    if lookahead_batch is None:
        lookahead_batch = source_batch
    shared = lookahead_batch is source_batch

    gphi, info = meta_gradient(
        problem, state.theta, state.phi, lookahead_batch, target_batch,
        cfg.alpha, cfg.meta_grad_mode, cfg.clip_norm,
    )
    if shared:
        theta_new = info.theta_prime
    else:
        step = inner_step(
            problem, state.theta, state.phi, source_batch, cfg.alpha,
            cfg.clip_norm, create_graph=False,
        )
        theta_new = {k: step.theta_prime[k].data for k in step.theta_prime}
        info.source_loss = step.loss.item()

    cphi = float(clip_factor(gphi, cfg.clip_norm).data)
    phi_new = {k: state.phi[k].data - cfg.beta * cphi * gphi[k].data for k in state.phi}

    state.theta = ParamSet.from_arrays(theta_new)
    state.phi = ParamSet.from_arrays(phi_new)
    state.step += 1
    state.history.append(
        {"step": state.step, "source_loss": info.source_loss, "meta_loss": info.target_loss}
    )
    return state


# ---------------------------------------------------------------------------
# batch streams

class BatchStream:
    """Cycles one example list with per-epoch reshuffling; keeps partial
    batches so every example is visited each epoch."""

    def __init__(self, items: list, batch_size: int, rng: np.random.Generator):
        if not items:
            raise ContractError("empty dataset")
        self.items = items
        self.batch_size = batch_size
        self.rng = rng
        self._order: list[int] = []
        self._pos = 0

    def next_items(self) -> list:
        if self._pos >= len(self._order):
            self._order = list(self.rng.permutation(len(self.items)))
            self._pos = 0
        chunk = self._order[self._pos : self._pos + self.batch_size]
        self._pos += len(chunk)
        return [self.items[i] for i in chunk]


def collate(examples: list, role: str, enc_cfg: EncoderConfig) -> Batch:
    """examples: list of (byte token array, labels)."""
    seqs = [wrap_tokens(tok, enc_cfg.max_len) for tok, _ in examples]
    labels = [lab for _, lab in examples]
    return make_batch(seqs, labels, role, enc_cfg.task_kind, enc_cfg.max_len)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainReport:
    method: str
    history: list
    evals: list
    best_step: int
    best_dev_f1: float

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "history": self.history,
            "evals": self.evals,
            "best_step": self.best_step,
            "best_dev_f1": self.best_dev_f1,
        }


def default_tag_names(n_labels: int) -> list[str]:
    names = ["O"]
    t = 0
    while len(names) < n_labels:
        names.append(f"B-E{t}")
        if len(names) < n_labels:
            names.append(f"I-E{t}")
        t += 1
    return names


def evaluate(
    theta: ParamSet,
    enc_cfg: EncoderConfig,
    dataset,
    batch_size: int = 32,
    tag_names: Optional[list[str]] = None,
) -> dict:
    """F1 and mean loss on a dataset using the plain encoder (no hook)."""
    examples = dataset.examples
    if not examples:
        raise ContractError("empty dataset")
    if enc_cfg.task_kind == TOKEN_LABELING and tag_names is None:
        tag_names = getattr(dataset, "tag_names", None) or default_tag_names(enc_cfg.n_labels)

    loss_sum = 0.0
    weight_sum = 0.0
    gold_tags: list[list[str]] = []
    pred_tags: list[list[str]] = []
    gold_labels: list[int] = []
    pred_labels: list[int] = []

    with no_record():
        for i in range(0, len(examples), batch_size):
            batch = collate(examples[i : i + batch_size], "target", enc_cfg)
            logits, _ = forward(theta, enc_cfg, batch)
            w = loss_weight(batch, enc_cfg)
            loss_sum += task_loss(logits, batch, enc_cfg).item() * w
            weight_sum += w
            pred = logits.data.argmax(axis=-1)
            if enc_cfg.task_kind == TOKEN_LABELING:
                for j in range(batch.token_ids.shape[0]):
                    keep = (batch.attention_mask[j] > 0) & (batch.labels[j] != IGNORE_LABEL)
                    gold_tags.append([tag_names[l] for l in batch.labels[j][keep]])
                    pred_tags.append([tag_names[l] for l in pred[j][keep]])
            else:
                gold_labels.extend(batch.labels.tolist())
                pred_labels.extend(pred.tolist())

    if enc_cfg.task_kind == TOKEN_LABELING:
        precision, recall, f1 = span_prf(gold_tags, pred_tags)
    else:
        if enc_cfg.n_labels == 2:
            f1 = binary_f1(gold_labels, pred_labels)
        else:
            f1 = macro_f1(gold_labels, pred_labels, enc_cfg.n_labels)
        precision = recall = f1
    return {
        "f1": f1,
        "precision": precision,
        "recall": recall,
        "loss": loss_sum / weight_sum,
    }


def _mixed_items(source_data, target_train) -> list:
    items = []
    if source_data is not None:
        items.extend((tok, lab, "source") for tok, lab in source_data.examples)
    items.extend((tok, lab, "target") for tok, lab in target_train.examples)
    return items


def _single_level_step(
    theta: ParamSet,
    phi: Optional[ParamSet],
    group_items: list,
    cfg: TrainConfig,
    enc_cfg: EncoderConfig,
    problem: EncoderTransferProblem,
    use_hook: bool,
) -> tuple[ParamSet, Optional[ParamSet], float]:
    """One SGD step on a mixed batch; source examples go through the hook
    only for the jt_rtn method. Loss is the position-weighted mean over
    the whole mixed batch."""
    by_role: dict[str, list] = {"source": [], "target": []}
    for tok, lab, role in group_items:
        by_role[role].append((tok, lab))

    parts = []
    for role in ("source", "target"):
        if not by_role[role]:
            continue
        batch = collate(by_role[role], role, enc_cfg)
        if use_hook and role == "source":
            loss = problem.source_loss(theta, phi, batch)
        else:
            loss = problem.target_loss(theta, batch)
        parts.append((loss, loss_weight(batch, enc_cfg)))

    total_w = sum(w for _, w in parts)
    loss = None
    for part_loss, w in parts:
        term = scale(part_loss, w / total_w)
        loss = term if loss is None else add(loss, term)

    if use_hook:
        joint = ParamSet.merged({"enc": theta, "rtn": phi})
        grads = grad(loss, joint)
        c = float(clip_factor(grads, cfg.clip_norm).data)
        new = ParamSet.from_arrays(
            {k: joint[k].data - cfg.alpha * c * grads[k].data for k in joint}
        )
        return new.split("enc"), new.split("rtn"), loss.item()

    grads = grad(loss, theta)
    c = float(clip_factor(grads, cfg.clip_norm).data)
    theta_new = ParamSet.from_arrays(
        {k: theta[k].data - cfg.alpha * c * grads[k].data for k in theta}
    )
    return theta_new, phi, loss.item()


def train(
    cfg: TrainConfig,
    enc_cfg: EncoderConfig,
    source_data,
    target_data: Mapping[str, object],
    init_theta: Optional[Mapping[str, np.ndarray]] = None,
) -> tuple[ParamSet, TrainState, TrainReport]:
    """Run one training cell; returns the model-selected theta.

    `target_data` maps split names to datasets; "train" is required and
    "dev" drives periodic validation plus best-checkpoint selection. The
    transformation parameters are a training-time device only: the
    returned model is theta alone. `init_theta` warm-starts the encoder
    (the desk analog of beginning from a pretrained base model); when
    absent, the encoder initializes randomly from the config seed.
    """
    if cfg.method not in METHODS:
        raise ContractError(f"unknown method {cfg.method!r}")
    target_train = target_data.get("train")
    target_dev = target_data.get("dev")
    if target_train is None or not target_train.examples:
        raise ContractError("empty dataset: target train split is required")
    if cfg.method == "metaxl" and (source_data is None or not source_data.examples):
        raise ContractError("metaxl requires both source and target data")

    placement = cfg.placement if cfg.placement is not None else enc_cfg.n_layers
    uses_rtn = cfg.method in ("jt_rtn", "metaxl")
    problem = EncoderTransferProblem(
        enc_cfg, placement if uses_rtn else None, cfg.rtn_residual
    )

    if init_theta is not None:
        theta = ParamSet.from_arrays({k: np.array(v) for k, v in init_theta.items()})
    else:
        theta = init_encoder_params(enc_cfg, seed=cfg.seed)
    phi = rtn_init(enc_cfg.d_model, cfg.bottleneck_r, seed=cfg.seed) if uses_rtn else None
    state = TrainState(theta=theta, phi=phi)

    def stream_rng(key: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(300, key)))

    evals: list[dict] = []
    best = {"step": 0, "f1": -1.0, "theta": theta.values_copy()}

    def run_eval(step_no: int):
        if target_dev is None or not target_dev.examples:
            return
        res = evaluate(state.theta, enc_cfg, target_dev)
        evals.append({"step": step_no, "dev_f1": res["f1"], "dev_loss": res["loss"]})
        if res["f1"] > best["f1"]:
            best.update(step=step_no, f1=res["f1"], theta=state.theta.values_copy())

    if cfg.method == "metaxl":
        src_stream = BatchStream(list(source_data.examples), cfg.batch_source, stream_rng(1))
        tgt_stream = BatchStream(list(target_train.examples), cfg.batch_target, stream_rng(2))
        for i in range(cfg.steps):
            sb = collate(src_stream.next_items(), "source", enc_cfg)
            tb = collate(tgt_stream.next_items(), "target", enc_cfg)
            lookahead = None
            if cfg.fresh_inner_batch:
                lookahead = collate(src_stream.next_items(), "source", enc_cfg)
                sb, lookahead = lookahead, sb
            metaxl_step(state, sb, tb, cfg, problem, lookahead_batch=lookahead)
            if (i + 1) % cfg.eval_every == 0:
                run_eval(i + 1)
    else:
        source = source_data if cfg.method in ("jt", "jt_rtn") else None
        if source is not None and not source.examples:
            source = None
        items = _mixed_items(source, target_train)
        batch_size = cfg.batch_target + (cfg.batch_source if source is not None else 0)
        stream = BatchStream(items, batch_size, stream_rng(3))
        use_hook = cfg.method == "jt_rtn"
        for i in range(cfg.steps):
            group = stream.next_items()
            state.theta, state.phi, loss_val = _single_level_step(
                state.theta, state.phi, group, cfg, enc_cfg, problem, use_hook
            )
            state.step += 1
            state.history.append({"step": state.step, "loss": loss_val})
            if (i + 1) % cfg.eval_every == 0:
                run_eval(i + 1)

    if not evals or evals[-1]["step"] != cfg.steps:
        run_eval(cfg.steps)

    best_theta = ParamSet.from_arrays(best["theta"])
    report = TrainReport(
        method=cfg.method,
        history=state.history,
        evals=evals,
        best_step=best["step"],
        best_dev_f1=best["f1"],
    )
    return best_theta, state, report
