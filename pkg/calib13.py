"""Free-combo regime: can phi reach no-harm (r=31) and beat flat JT?"""
import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate

ENC = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                    task_kind="token_labeling", n_labels=9)
spec = SyntheticTaskSpec(task_kind="token_labeling", n_labels=9, shift=0.5,
                         vocab_low=16, vocab_high=195, entity_rate=0.25,
                         entity_pool_bytes=12, patterns_per_type=0,
                         seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=11)
source, targets, _ = generate_pair(spec)

for seed in (0, 1, 2):
    t0 = time.time()
    cfg = TrainConfig(alpha=0.3, beta=0.3, method="jt", steps=2000,
                      batch_source=8, batch_target=16, seed=seed, eval_every=100)
    theta, _, report = train(cfg, ENC, source, targets)
    res = evaluate(theta, ENC, targets["test"])
    print(f"jt seed={seed}: dev={report.best_dev_f1:.3f} test={res['f1']:.3f} "
          f"({time.time()-t0:.0f}s)", flush=True)

for seed in (0, 1, 2):
    for fresh in (False, True):
        t0 = time.time()
        cfg = TrainConfig(alpha=0.3, beta=0.3, method="metaxl", steps=2000,
                          placement=2, bottleneck_r=31, batch_source=8, batch_target=16,
                          seed=seed, eval_every=100, fresh_inner_batch=fresh)
        theta, state, report = train(cfg, ENC, source, targets)
        res = evaluate(theta, ENC, targets["test"])
        meta = [h["meta_loss"] for h in state.history]
        trend = [round(float(np.mean(meta[i:i+400])), 2) for i in range(0, 2000, 400)]
        print(f"metaxl r31 seed={seed} fresh={fresh}: dev={report.best_dev_f1:.3f} "
              f"test={res['f1']:.3f} meta_trend={trend} ({time.time()-t0:.0f}s)", flush=True)
        if fresh:
            break  # fresh only for seed 0
