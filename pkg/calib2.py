"""Diagnostics: source-only transfer level, metaxl P/R, identity-phi floor."""
import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair, Dataset
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate

ENC = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                    task_kind="token_labeling", n_labels=5)
SPEC = SyntheticTaskSpec(task_kind="token_labeling", n_labels=5, shift=0.5,
                         vocab_low=32, vocab_high=126, entity_rate=0.22,
                         seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=11)

source, targets, info = generate_pair(SPEC)

# 1. source-only: train on source data as if it were the target (plain encoder),
#    evaluate on target test -> compatible-transfer ceiling without phi.
src_as_target = {"train": Dataset(source.examples, "target", SPEC.task_kind, SPEC.n_labels,
                                  tag_names=targets["train"].tag_names),
                 "dev": targets["dev"]}
for alpha, steps in ((0.3, 1200),):
    cfg = TrainConfig(alpha=alpha, beta=alpha, method="target_only", steps=steps,
                      batch_source=8, batch_target=16, seed=0, eval_every=150)
    theta, state, report = train(cfg, ENC, None, src_as_target)
    res = evaluate(theta, ENC, targets["test"])
    print(f"source-only a={alpha}: dev_best={report.best_dev_f1:.3f} "
          f"test P={res['precision']:.3f} R={res['recall']:.3f} F1={res['f1']:.3f}")

# 2. metaxl best-so-far with P/R detail and bigger target batches
for alpha, bt, steps in ((0.15, 16, 1500),):
    cfg = TrainConfig(alpha=alpha, beta=alpha, method="metaxl", steps=steps, placement=2,
                      bottleneck_r=24, batch_source=8, batch_target=bt, seed=0, eval_every=150)
    theta, state, report = train(cfg, ENC, source, targets)
    res = evaluate(theta, ENC, targets["test"])
    print(f"metaxl a={alpha} bt={bt}: dev_best={report.best_dev_f1:.3f} "
          f"test P={res['precision']:.3f} R={res['recall']:.3f} F1={res['f1']:.3f}")

# 3. target_only reference with P/R
cfg = TrainConfig(alpha=0.3, beta=0.3, method="target_only", steps=1200,
                  batch_source=8, batch_target=8, seed=0, eval_every=150)
theta, state, report = train(cfg, ENC, None, targets)
res = evaluate(theta, ENC, targets["test"])
print(f"target_only: dev_best={report.best_dev_f1:.3f} "
      f"test P={res['precision']:.3f} R={res['recall']:.3f} F1={res['f1']:.3f}")

# 4. jt with P/R
cfg = TrainConfig(alpha=0.3, beta=0.3, method="jt", steps=1200,
                  batch_source=8, batch_target=8, seed=0, eval_every=150)
theta, state, report = train(cfg, ENC, source, targets)
res = evaluate(theta, ENC, targets["test"])
print(f"jt: dev_best={report.best_dev_f1:.3f} "
      f"test P={res['precision']:.3f} R={res['recall']:.3f} F1={res['f1']:.3f}")
