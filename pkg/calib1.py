import sys
import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate

ENC = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                    task_kind="token_labeling", n_labels=5)


def make_data(variant, seed):
    if variant == "A":
        spec = SyntheticTaskSpec(task_kind="token_labeling", n_labels=5, shift=0.5,
                                 vocab_low=32, vocab_high=126, entity_rate=0.22,
                                 seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=seed)
    else:  # B: denser entities, smaller vocab
        spec = SyntheticTaskSpec(task_kind="token_labeling", n_labels=5, shift=0.5,
                                 vocab_low=40, vocab_high=99, entity_rate=0.30,
                                 seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=seed)
    return generate_pair(spec)


def run(variant, method, alpha, beta, placement, r, steps, seed=0, data_seed=11):
    source, targets, _ = make_data(variant, data_seed)
    t0 = time.time()
    cfg = TrainConfig(alpha=alpha, beta=beta, method=method, steps=steps,
                      placement=placement, bottleneck_r=r,
                      batch_source=8, batch_target=8, seed=seed, eval_every=150)
    theta, state, report = train(cfg, ENC, source if method != "target_only" else None, targets)
    test = evaluate(theta, ENC, targets["test"])["f1"]
    print(f"{variant} {method:8s} a={alpha:.2f} b={beta:.3f} p={placement} r={r} "
          f"s={steps}: dev={report.best_dev_f1:.3f} test={test:.3f} ({time.time()-t0:.0f}s)",
          flush=True)
    return test


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "scan1"
    if which == "scan1":
        for variant in ("A", "B"):
            for alpha in (0.15, 0.3):
                run(variant, "jt", alpha, alpha, None, 12, 1200)
                run(variant, "metaxl", alpha, alpha, 2, 24, 1200)
                run(variant, "metaxl", alpha, alpha, 0, 24, 1200)
