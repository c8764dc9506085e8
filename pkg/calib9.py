"""Middle ground: free combos, moderate pools; longer metaxl; r=30."""
import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate

ENC = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                    task_kind="token_labeling", n_labels=9)


def data(seed, pool, low, high):
    spec = SyntheticTaskSpec(task_kind="token_labeling", n_labels=9, shift=0.5,
                             vocab_low=low, vocab_high=high, entity_rate=0.25,
                             entity_pool_bytes=pool, patterns_per_type=0,
                             seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=seed)
    return generate_pair(spec)


for data_seed in (11, 12):
    source, targets, _ = data(data_seed, pool=6, low=40, high=159)  # V=120
    for name, method, kw in (
        ("jt", "jt", dict(alpha=0.3, steps=2000, batch_source=8, batch_target=8)),
        ("metaxl r24", "metaxl", dict(alpha=0.3, steps=2000, placement=2, bottleneck_r=24,
                                      batch_source=8, batch_target=16)),
        ("metaxl r30", "metaxl", dict(alpha=0.3, steps=2000, placement=2, bottleneck_r=30,
                                      batch_source=8, batch_target=16)),
    ):
        t0 = time.time()
        cfg = TrainConfig(method=method, beta=0.3, seed=data_seed, eval_every=100, **kw)
        theta, _, report = train(cfg, ENC, source, targets)
        res = evaluate(theta, ENC, targets["test"])
        curve = [round(e["dev_f1"], 2) for e in report.evals]
        print(f"d{data_seed} {name}: dev={report.best_dev_f1:.3f} test={res['f1']:.3f} "
              f"curve={curve} ({time.time()-t0:.0f}s)", flush=True)
