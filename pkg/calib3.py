import sys
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
source, targets, info = generate_pair(SPEC)

for placement, alpha, steps in ((1, 0.15, 3000), (2, 0.1, 3000)):
    t0 = time.time()
    cfg = TrainConfig(alpha=alpha, beta=alpha, method="metaxl", steps=steps,
                      placement=placement, bottleneck_r=24,
                      batch_source=8, batch_target=16, seed=0, eval_every=300)
    theta, state, report = train(cfg, ENC, source, targets)
    res = evaluate(theta, ENC, targets["test"])
    curve = [(e["step"], round(e["dev_f1"], 3)) for e in report.evals]
    print(f"metaxl p={placement} a={alpha}: test={res['f1']:.3f} curve={curve} ({time.time()-t0:.0f}s)",
          flush=True)
