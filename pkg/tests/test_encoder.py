"""Encoder contracts: tokenization, forward invariants, gradient checks."""
import numpy as np
import pytest

from metaxfer.encoder import (
    CLS_ID,
    IGNORE_LABEL,
    PAD_ID,
    SEP_ID,
    Batch,
    EncoderConfig,
    forward,
    init_encoder_params,
    make_batch,
    task_loss,
    tokenize,
)
from metaxfer.errors import ContractError
from metaxfer.params import ParamSet, grad
from metaxfer.tensor import Tensor, finite_difference, no_record, scale

from test_autodiff import max_rel_err

TINY = EncoderConfig(
    d_model=8, n_layers=2, n_heads=2, d_ffn=12, max_len=8, vocab_size=20,
    task_kind="token_labeling", n_labels=3,
)


def tiny_batch(rng, cfg=TINY, n=2, t=6, role="target"):
    ids = rng.integers(0, 12, size=(n, t)).astype(np.int64)
    ids[:, 0] = 13  # stand-in CLS row in the small vocab
    mask = np.ones((n, t))
    mask[0, t - 1] = 0.0  # one PAD position
    ids[0, t - 1] = 14
    if cfg.task_kind == "token_labeling":
        labels = rng.integers(0, cfg.n_labels, size=(n, t)).astype(np.int64)
        labels[:, 0] = IGNORE_LABEL
        labels[0, t - 1] = IGNORE_LABEL
    else:
        labels = rng.integers(0, cfg.n_labels, size=(n,)).astype(np.int64)
    return Batch(token_ids=ids, attention_mask=mask, labels=labels, role=role)


def test_tokenize_byte_identity():
    assert tokenize("ab", 16).tolist() == [CLS_ID, 97, 98, SEP_ID]


def test_tokenize_empty():
    assert tokenize("", 16).tolist() == [CLS_ID, SEP_ID]


def test_tokenize_truncation():
    ids = tokenize(bytes(range(44)) * 7, 16)
    assert len(ids) == 16 and ids[-1] == SEP_ID and ids[0] == CLS_ID


def test_make_batch_pads_and_masks():
    b = make_batch(
        [tokenize("ab", 8), tokenize("abcd", 8)],
        [[1, 2], [0, 1, 2, 0]],
        role="target",
        task_kind="token_labeling",
        max_len=8,
    )
    assert b.token_ids.shape == (2, 6)
    assert b.token_ids[0, 4] == PAD_ID and b.attention_mask[0, 4] == 0.0
    assert b.labels[0].tolist() == [IGNORE_LABEL, 1, 2, IGNORE_LABEL, IGNORE_LABEL, IGNORE_LABEL]


def test_param_count_deterministic_function_of_config():
    a = init_encoder_params(TINY, seed=0)
    b = init_encoder_params(TINY, seed=1)
    assert [x.shape for x in a.values()] == [x.shape for x in b.values()]
    c = init_encoder_params(TINY, seed=0)
    assert a.equals(c)


def test_attention_rows_sum_to_one_and_layernorm_stats():
    rng = np.random.default_rng(0)
    theta = init_encoder_params(TINY, seed=3)
    batch = tiny_batch(rng)
    captured = {}

    import metaxfer.encoder as enc
    orig_softmax = enc.softmax
    orig_ln = enc.layer_norm

    def spy_softmax(x):
        out = orig_softmax(x)
        if out.ndim == 4:
            captured.setdefault("attn", []).append(out.data)
        return out

    def spy_ln(x):
        out = orig_ln(x)
        captured.setdefault("ln", []).append(out.data)
        return out

    enc.softmax = spy_softmax
    enc.layer_norm = spy_ln
    try:
        forward(theta, TINY, batch)
    finally:
        enc.softmax = orig_softmax
        enc.layer_norm = orig_ln

    for attn in captured["attn"]:
        sums = attn.sum(axis=-1)
        assert np.abs(sums - 1.0).max() < 1e-12
        # masked key positions receive ~0 attention from real query rows
        assert attn[0, :, :, -1].max() < 1e-30
    for ln in captured["ln"]:
        assert np.abs(ln.mean(axis=-1)).max() < 1e-9


def test_identity_hook_is_bit_identical():
    rng = np.random.default_rng(1)
    theta = init_encoder_params(TINY, seed=5)
    batch = tiny_batch(rng)
    logits_plain, _ = forward(theta, TINY, batch)
    logits_hooked, hiddens = forward(theta, TINY, batch, rtn_hook=(1, lambda h: h))
    assert np.array_equal(logits_plain.data, logits_hooked.data)
    assert len(hiddens) == TINY.n_layers + 1


def test_hook_replaces_hidden_state():
    rng = np.random.default_rng(2)
    theta = init_encoder_params(TINY, seed=5)
    batch = tiny_batch(rng)
    _, hiddens = forward(theta, TINY, batch, rtn_hook=(0, lambda h: scale(h, 0.0)))
    assert np.array_equal(hiddens[0].data, np.zeros_like(hiddens[0].data))


def test_hook_index_out_of_range():
    rng = np.random.default_rng(3)
    theta = init_encoder_params(TINY, seed=5)
    with pytest.raises(ContractError):
        forward(theta, TINY, tiny_batch(rng), rtn_hook=(3, lambda h: h))


def test_batch_permutation_permutes_logits():
    rng = np.random.default_rng(4)
    theta = init_encoder_params(TINY, seed=7)
    batch = tiny_batch(rng, n=4)
    logits, _ = forward(theta, TINY, batch)
    perm = np.array([2, 0, 3, 1])
    pbatch = Batch(
        token_ids=batch.token_ids[perm],
        attention_mask=batch.attention_mask[perm],
        labels=batch.labels[perm],
        role=batch.role,
    )
    plogits, _ = forward(theta, TINY, pbatch)
    assert np.array_equal(plogits.data, logits.data[perm])


def test_pad_positions_get_zero_logit_gradient():
    rng = np.random.default_rng(5)
    theta = init_encoder_params(TINY, seed=9)
    batch = tiny_batch(rng)
    logits, _ = forward(theta, TINY, batch)
    loss = task_loss(logits, batch, TINY)
    from metaxfer.tensor import grad_tensors

    (glogits,) = grad_tensors(loss, [logits])
    pad = batch.attention_mask == 0
    assert np.array_equal(glogits.data[pad], np.zeros_like(glogits.data[pad]))
    ignored = batch.labels == IGNORE_LABEL
    assert np.array_equal(glogits.data[ignored], np.zeros_like(glogits.data[ignored]))


def test_doubling_batch_keeps_mean_loss():
    rng = np.random.default_rng(6)
    theta = init_encoder_params(TINY, seed=11)
    batch = tiny_batch(rng, n=3)
    doubled = Batch(
        token_ids=np.concatenate([batch.token_ids] * 2),
        attention_mask=np.concatenate([batch.attention_mask] * 2),
        labels=np.concatenate([batch.labels] * 2),
        role=batch.role,
    )
    with no_record():
        l1 = task_loss(forward(theta, TINY, batch)[0], batch, TINY).item()
        l2 = task_loss(forward(theta, TINY, doubled)[0], doubled, TINY).item()
    assert abs(l1 - l2) < 1e-12


def test_task_loss_trivials_and_oracle():
    cfg = EncoderConfig(
        d_model=8, n_layers=1, n_heads=1, d_ffn=8, max_len=8, vocab_size=20,
        task_kind="sequence_classification", n_labels=4,
    )
    # one-hot matched logits with +-20 margin
    logits = Tensor(np.array([[20.0, -20, -20, -20], [-20, -20, 20.0, -20]]))
    batch = Batch(
        token_ids=np.zeros((2, 2), dtype=np.int64),
        attention_mask=np.ones((2, 2)),
        labels=np.array([0, 2]),
        role="target",
    )
    assert task_loss(logits, batch, cfg).item() < 1e-6
    uniform = Tensor(np.zeros((2, 4)))
    assert task_loss(uniform, batch, cfg).item() == pytest.approx(np.log(4), abs=1e-12)

    # random case against an independent per-example log-sum-exp oracle
    rng = np.random.default_rng(7)
    z = rng.normal(size=(5, 4))
    y = rng.integers(0, 4, size=5)
    got = task_loss(Tensor(z), Batch(
        token_ids=np.zeros((5, 2), dtype=np.int64),
        attention_mask=np.ones((5, 2)),
        labels=y,
        role="target",
    ), cfg).item()
    per_example = []
    for i in range(5):
        lse = np.log(np.exp(z[i]).sum())
        per_example.append(lse - z[i][y[i]])
    assert got == pytest.approx(np.mean(per_example), abs=1e-10)


def test_all_positions_masked_is_contract_error():
    rng = np.random.default_rng(8)
    theta = init_encoder_params(TINY, seed=13)
    batch = tiny_batch(rng)
    batch.labels[:] = IGNORE_LABEL
    logits, _ = forward(theta, TINY, batch)
    with pytest.raises(ContractError):
        task_loss(logits, batch, TINY)


@pytest.mark.parametrize("task_kind", ["token_labeling", "sequence_classification"])
def test_every_parameter_gradient_matches_finite_differences(task_kind):
    cfg = EncoderConfig(
        d_model=8, n_layers=1, n_heads=1, d_ffn=10, max_len=8, vocab_size=16,
        task_kind=task_kind, n_labels=3,
    )
    rng = np.random.default_rng(9)
    theta = init_encoder_params(cfg, seed=21)
    ids = rng.integers(0, 16, size=(2, 3)).astype(np.int64)
    mask = np.ones((2, 3))
    if task_kind == "token_labeling":
        labels = rng.integers(0, 3, size=(2, 3)).astype(np.int64)
    else:
        labels = rng.integers(0, 3, size=(2,)).astype(np.int64)
    batch = Batch(token_ids=ids, attention_mask=mask, labels=labels, role="target")

    loss = task_loss(forward(theta, cfg, batch)[0], batch, cfg)
    grads = grad(loss, theta)

    worst = 0.0
    for name in theta:
        def loss_at(v, name=name):
            arrays = theta.values_copy()
            arrays[name] = v
            t2 = ParamSet.from_arrays(arrays, requires_grad=False)
            with no_record():
                return task_loss(forward(t2, cfg, batch)[0], batch, cfg).item()

        fd = finite_difference(loss_at, theta[name].data)
        worst = max(worst, max_rel_err(grads[name].data, fd))
    assert worst < 1e-5
