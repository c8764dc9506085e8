"""Warm-start regime: all methods begin from a source-pretrained theta."""
import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair, Dataset
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate

ENC = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                    task_kind="token_labeling", n_labels=9)
spec = SyntheticTaskSpec(task_kind="token_labeling", n_labels=9, shift=0.5,
                         vocab_low=16, vocab_high=195, entity_rate=0.25,
                         entity_pool_bytes=8, patterns_per_type=4,
                         seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=11)
source, targets, _ = generate_pair(spec)

# Source pretraining, transfer-selected on target dev (method-neutral).
src_as_train = {"train": Dataset(source.examples, "target", spec.task_kind,
                                 spec.n_labels, tag_names=targets["train"].tag_names),
                "dev": targets["dev"]}
t0 = time.time()
pre_cfg = TrainConfig(alpha=0.3, beta=0.3, method="target_only", steps=600,
                      batch_source=8, batch_target=16, seed=0, eval_every=50)
theta0, _, pre_report = train(pre_cfg, ENC, None, src_as_train)
base = evaluate(theta0, ENC, targets["test"])
print(f"pretrained: best_step={pre_report.best_step} target test F1={base['f1']:.3f} "
      f"({time.time()-t0:.0f}s)", flush=True)
W = theta0.values_copy()

for method in ("jt", "metaxl", "target_only"):
    for seed in (0, 1, 2):
        t0 = time.time()
        cfg = TrainConfig(alpha=0.3, beta=0.3, method=method, steps=800, placement=2,
                          bottleneck_r=24, batch_source=8, batch_target=16,
                          seed=seed, eval_every=25)
        theta, _, report = train(cfg, ENC, source if method != "target_only" else None,
                                 targets, init_theta=W)
        res = evaluate(theta, ENC, targets["test"])
        print(f"warm {method} seed={seed}: dev={report.best_dev_f1:.3f} "
              f"test={res['f1']:.3f} ({time.time()-t0:.0f}s)", flush=True)
