"""Faithful reconstruction of the promising config: pools=8, patterns=4."""
import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate

ENC = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                    task_kind="token_labeling", n_labels=9)

spec = SyntheticTaskSpec(task_kind="token_labeling", n_labels=9, shift=0.5,
                         vocab_low=16, vocab_high=195, entity_rate=0.25,
                         entity_pool_bytes=8, patterns_per_type=4,
                         seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=11)
source, targets, _ = generate_pair(spec)

for seed in (0, 1):
    t0 = time.time()
    cfg = TrainConfig(alpha=0.3, beta=0.3, method="jt", steps=1200,
                      batch_source=8, batch_target=16, seed=seed, eval_every=100)
    theta, _, report = train(cfg, ENC, source, targets)
    res = evaluate(theta, ENC, targets["test"])
    print(f"jt seed={seed}: dev={report.best_dev_f1:.3f} test={res['f1']:.3f} "
          f"({time.time()-t0:.0f}s)", flush=True)

for seed in (0, 1, 2, 3):
    t0 = time.time()
    cfg = TrainConfig(alpha=0.3, beta=0.3, method="metaxl", steps=1200,
                      placement=2, bottleneck_r=24,
                      batch_source=8, batch_target=16, seed=seed, eval_every=100)
    theta, state, report = train(cfg, ENC, source, targets)
    res = evaluate(theta, ENC, targets["test"])
    print(f"metaxl seed={seed}: dev={report.best_dev_f1:.3f} test={res['f1']:.3f} "
          f"({time.time()-t0:.0f}s)", flush=True)
