"""Warm start, longer horizon: does phi accrue on a stable base?"""
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

src_as_train = {"train": Dataset(source.examples, "target", spec.task_kind,
                                 spec.n_labels, tag_names=targets["train"].tag_names),
                "dev": targets["dev"]}
pre_cfg = TrainConfig(alpha=0.3, beta=0.3, method="target_only", steps=300,
                      batch_source=8, batch_target=16, seed=0, eval_every=25)
theta0, _, prerep = train(pre_cfg, ENC, None, src_as_train)
W = theta0.values_copy()
print(f"pretrain best_step={prerep.best_step} transfer={prerep.best_dev_f1:.3f}", flush=True)

for method, steps in (("jt", 1500), ("metaxl", 1500)):
    for seed in (0, 1, 2):
        t0 = time.time()
        cfg = TrainConfig(alpha=0.3, beta=0.3, method=method, steps=steps, placement=2,
                          bottleneck_r=24, batch_source=8, batch_target=16,
                          seed=seed, eval_every=25)
        theta, _, report = train(cfg, ENC, source, targets, init_theta=W)
        res = evaluate(theta, ENC, targets["test"])
        curve = [round(e["dev_f1"], 2) for e in report.evals][::6]
        print(f"warm {method} s={seed}: dev={report.best_dev_f1:.3f} test={res['f1']:.3f} "
              f"curve6={curve} ({time.time()-t0:.0f}s)", flush=True)
