import time

import numpy as np

from metaxfer.data import SyntheticTaskSpec, generate_pair
from metaxfer.encoder import EncoderConfig
from metaxfer.bilevel import TrainConfig, train, evaluate

ENC = EncoderConfig(d_model=32, n_layers=2, n_heads=2, d_ffn=64, max_len=32,
                    task_kind="token_labeling", n_labels=9)


def data(seed):
    spec = SyntheticTaskSpec(task_kind="token_labeling", n_labels=9, shift=0.5,
                             vocab_low=16, vocab_high=195, entity_rate=0.25,
                             seq_len=(8, 16), sizes=(5000, 100, 200, 400), seed=seed)
    return generate_pair(spec)


for data_seed in (11, 12):
    source, targets, _ = data(data_seed)
    t0 = time.time()
    cfg = TrainConfig(alpha=0.3, beta=0.3, method="jt", steps=2000,
                      batch_source=8, batch_target=8, seed=data_seed, eval_every=200)
    theta, _, report = train(cfg, ENC, source, targets)
    res = evaluate(theta, ENC, targets["test"])
    print(f"d{data_seed} jt: dev={report.best_dev_f1:.3f} test={res['f1']:.3f} ({time.time()-t0:.0f}s)", flush=True)
    for placement, r in ((2, 24), (2, 16), (1, 24)):
        t0 = time.time()
        cfg = TrainConfig(alpha=0.3, beta=0.3, method="metaxl", steps=2000,
                          placement=placement, bottleneck_r=r,
                          batch_source=8, batch_target=16, seed=data_seed, eval_every=200)
        theta, state, report = train(cfg, ENC, source, targets)
        res = evaluate(theta, ENC, targets["test"])
        curve = [(e["step"], round(e["dev_f1"], 2)) for e in report.evals[-4:]]
        print(f"d{data_seed} metaxl p={placement} r={r}: dev={report.best_dev_f1:.3f} "
              f"test={res['f1']:.3f} tail={curve} ({time.time()-t0:.0f}s)", flush=True)
