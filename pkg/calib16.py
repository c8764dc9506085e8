"""Triangle on the structured (cross-pool) remapping."""
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
source, targets, info = generate_pair(spec)
print("remapped:", info["n_remapped"], flush=True)

src_as_train = {"train": Dataset(source.examples, "target", spec.task_kind,
                                 spec.n_labels, tag_names=targets["train"].tag_names),
                "dev": targets["dev"]}

for name, method, src, tgt, kw in (
    ("target_only", "target_only", None, targets, dict(steps=800, batch_target=8)),
    ("src_only", "target_only", None, src_as_train, dict(steps=800, batch_target=16)),
    ("jt", "jt", source, targets, dict(steps=800, batch_target=8)),
    ("metaxl", "metaxl", source, targets,
     dict(steps=800, placement=2, bottleneck_r=24, batch_target=16)),
    ("metaxl1200", "metaxl", source, targets,
     dict(steps=1200, placement=2, bottleneck_r=24, batch_target=16)),
):
    for seed in (0, 1):
        t0 = time.time()
        cfg = TrainConfig(alpha=0.3, beta=0.3, method=method, batch_source=8,
                          seed=seed, eval_every=25, **kw)
        theta, _, report = train(cfg, ENC, src, tgt)
        res = evaluate(theta, ENC, targets["test"])
        print(f"{name} seed={seed}: dev={report.best_dev_f1:.3f} test={res['f1']:.3f} "
              f"({time.time()-t0:.0f}s)", flush=True)
