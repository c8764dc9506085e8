"""Variant C revisited: higher alpha for faster relative phi speed; seed spread."""
import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate

ENC = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                    task_kind="token_labeling", n_labels=9)

spec = SyntheticTaskSpec(task_kind="token_labeling", n_labels=9, shift=0.5,
                         vocab_low=16, vocab_high=195, entity_rate=0.25,
                         entity_pool_bytes=12, patterns_per_type=6,
                         seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=11)
source, targets, _ = generate_pair(spec)

for seed in (0, 1):
    t0 = time.time()
    cfg = TrainConfig(alpha=0.3, beta=0.3, method="jt", steps=1500,
                      batch_source=8, batch_target=8, seed=seed, eval_every=50)
    theta, _, report = train(cfg, ENC, source, targets)
    res = evaluate(theta, ENC, targets["test"])
    print(f"jt a=0.3 seed={seed}: dev={report.best_dev_f1:.3f} test={res['f1']:.3f} "
          f"({time.time()-t0:.0f}s)", flush=True)

for alpha in (0.5,):
    for seed in (0, 1, 2):
        t0 = time.time()
        cfg = TrainConfig(alpha=alpha, beta=alpha, method="metaxl", steps=1500,
                          placement=2, bottleneck_r=24,
                          batch_source=8, batch_target=16, seed=seed, eval_every=50)
        theta, state, report = train(cfg, ENC, source, targets)
        res = evaluate(theta, ENC, targets["test"])
        top = sorted(report.evals, key=lambda e: -e["dev_f1"])[:3]
        print(f"metaxl a={alpha} seed={seed}: dev={report.best_dev_f1:.3f} "
              f"test={res['f1']:.3f} top={[(e['step'], round(e['dev_f1'],2)) for e in top]} "
              f"({time.time()-t0:.0f}s)", flush=True)

for seed in (1, 2):
    t0 = time.time()
    cfg = TrainConfig(alpha=0.3, beta=0.3, method="metaxl", steps=1500,
                      placement=2, bottleneck_r=24,
                      batch_source=8, batch_target=16, seed=seed, eval_every=50)
    theta, state, report = train(cfg, ENC, source, targets)
    res = evaluate(theta, ENC, targets["test"])
    top = sorted(report.evals, key=lambda e: -e["dev_f1"])[:3]
    print(f"metaxl a=0.3 seed={seed}: dev={report.best_dev_f1:.3f} "
          f"test={res['f1']:.3f} top={[(e['step'], round(e['dev_f1'],2)) for e in top]} "
          f"({time.time()-t0:.0f}s)", flush=True)
