"""Dense-signal combinations: higher entity rate, bigger meta batches, more types."""
import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate


def run(tag, spec_kw, enc_kw, train_kw, method, seed):
    spec = SyntheticTaskSpec(task_kind="token_labeling", shift=0.5,
                             sizes=(5000, 100, 200, 400), seq_len=(8, 16), **spec_kw)
    source, targets, _ = generate_pair(spec)
    enc = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                        task_kind="token_labeling", **enc_kw)
    t0 = time.time()
    cfg = TrainConfig(method=method, seed=seed, eval_every=50, **train_kw)
    theta, _, report = train(cfg, enc, source, targets)
    res = evaluate(theta, enc, targets["test"])
    print(f"{tag} {method} seed={seed}: dev={report.best_dev_f1:.3f} test={res['f1']:.3f} "
          f"({time.time()-t0:.0f}s)", flush=True)


D1_SPEC = dict(n_labels=9, vocab_low=16, vocab_high=195, entity_rate=0.35,
               entity_pool_bytes=8, patterns_per_type=4, seed=11)
D1_ENC = dict(n_labels=9)

run("D1", D1_SPEC, D1_ENC, dict(alpha=0.3, beta=0.3, steps=1200, batch_source=8,
                                batch_target=16), "jt", 0)
for seed in (0, 1):
    run("D1", D1_SPEC, D1_ENC, dict(alpha=0.3, beta=0.3, steps=1200, placement=2,
                                    bottleneck_r=24, batch_source=8, batch_target=32),
        "metaxl", seed)

D3_SPEC = dict(n_labels=13, vocab_low=16, vocab_high=195, entity_rate=0.3,
               entity_pool_bytes=6, patterns_per_type=4, seed=11)
D3_ENC = dict(n_labels=13)
run("D3", D3_SPEC, D3_ENC, dict(alpha=0.3, beta=0.3, steps=1200, batch_source=8,
                                batch_target=16), "jt", 0)
for seed in (0, 1):
    run("D3", D3_SPEC, D3_ENC, dict(alpha=0.3, beta=0.3, steps=1200, placement=2,
                                    bottleneck_r=24, batch_source=8, batch_target=16),
        "metaxl", seed)
