import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate

ENC = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                    task_kind="token_labeling", n_labels=5)
SPEC = SyntheticTaskSpec(task_kind="token_labeling", n_labels=5, shift=0.5,
                         vocab_low=32, vocab_high=126, entity_rate=0.22,
                         seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=11)
source, targets, _ = generate_pair(SPEC)

RUNS = [
    ("metaxl", dict(alpha=0.05, beta=0.05, placement=2, bottleneck_r=24, steps=6000,
                    batch_source=8, batch_target=16)),
    ("jt",     dict(alpha=0.05, beta=0.05, steps=6000, batch_source=8, batch_target=16)),
    ("metaxl", dict(alpha=0.3, beta=0.3, placement=2, bottleneck_r=30, steps=1200,
                    batch_source=8, batch_target=16)),
    ("metaxl", dict(alpha=0.15, beta=0.15, placement=2, bottleneck_r=30, steps=3000,
                    batch_source=16, batch_target=16)),
    ("jt",     dict(alpha=0.15, beta=0.15, steps=3000, batch_source=16, batch_target=16)),
]

for method, kw in RUNS:
    t0 = time.time()
    cfg = TrainConfig(method=method, seed=0, eval_every=150, **kw)
    theta, state, report = train(cfg, ENC, source, targets)
    res = evaluate(theta, ENC, targets["test"])
    top = sorted(report.evals, key=lambda e: -e["dev_f1"])[:3]
    print(f"{method} {kw}: test={res['f1']:.3f} dev_best={report.best_dev_f1:.3f} "
          f"top_evals={[(e['step'], round(e['dev_f1'],3)) for e in top]} ({time.time()-t0:.0f}s)",
          flush=True)
