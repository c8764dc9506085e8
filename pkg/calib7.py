"""Variant D: tiny entity pools -> few clusters for phi to relocate."""
import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair, Dataset
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate

ENC = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                    task_kind="token_labeling", n_labels=5)


def data(seed):
    spec = SyntheticTaskSpec(task_kind="token_labeling", n_labels=5, shift=0.5,
                             vocab_low=32, vocab_high=126, entity_rate=0.25,
                             entity_pool_bytes=3, patterns_per_type=3,
                             seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=seed)
    return generate_pair(spec)


for data_seed in (11, 12):
    source, targets, _ = data(data_seed)
    for method, kw in (
        ("target_only", dict(alpha=0.3, beta=0.3, steps=800, batch_source=8, batch_target=8)),
        ("jt", dict(alpha=0.3, beta=0.3, steps=800, batch_source=8, batch_target=8)),
        ("metaxl", dict(alpha=0.3, beta=0.3, steps=800, placement=2, bottleneck_r=24,
                        batch_source=8, batch_target=16)),
        ("metaxl", dict(alpha=0.3, beta=0.3, steps=800, placement=0, bottleneck_r=24,
                        batch_source=8, batch_target=16)),
    ):
        t0 = time.time()
        cfg = TrainConfig(method=method, seed=data_seed, eval_every=80, **kw)
        theta, _, report = train(cfg, ENC, source if method != "target_only" else None, targets)
        res = evaluate(theta, ENC, targets["test"])
        tag = f"p={kw.get('placement')}" if method == "metaxl" else ""
        print(f"d{data_seed} {method} {tag}: dev={report.best_dev_f1:.3f} "
              f"test={res['f1']:.3f} ({time.time()-t0:.0f}s)", flush=True)
