"""Command-line experiment runner.

    metaxfer train --config cfg.json [--method M] [--seed S] [--placement I] [--beta B]
    metaxfer eval --checkpoint ckpt.npz --data file.conll
    metaxfer analyze --run-dir runs/study
    metaxfer gen-data --spec spec.json --out data/
"""
from __future__ import annotations

import argparse
import json
import sys

from .bilevel import evaluate
from .checkpoint import load_checkpoint
from .data import SyntheticTaskSpec, load_sequence_labeled, load_token_labeled
from .encoder import EncoderConfig
from .experiment import ExperimentConfig, analyze, generate_to_files, run


def _cmd_train(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.method:
        config.methods = [args.method]
    if args.seed is not None:
        config.seeds = [args.seed]
    if args.placement is not None:
        config.placements = [args.placement]
    if args.beta is not None:
        config.betas = [args.beta]
    report = run(config, jobs=args.jobs)
    out = config.resolved_out_dir()
    failed = [r for r in report.rows if r["status"] != "ok"]
    for row in report.rows:
        print(
            f"{row['method']:12s} seed={row['seed']} beta={row.get('beta')} "
            f"placement={row.get('placement')} dev={row.get('dev_f1')} "
            f"test={row.get('test_f1')} [{row['status']}]"
        )
    print(f"summary: {out / 'summary.csv'}")
    if failed:
        print(f"{len(failed)} cell(s) failed", file=sys.stderr)
        return 1
    return 0


def _cmd_eval(args) -> int:
    groups, manifest = load_checkpoint(args.checkpoint)
    enc_cfg = EncoderConfig(**manifest["encoder"])
    loader = load_token_labeled if enc_cfg.task_kind == "token_labeling" else load_sequence_labeled
    dataset = loader(args.data)
    if manifest.get("tag_names"):
        dataset.tag_names = manifest["tag_names"]
    result = evaluate(groups["theta"], enc_cfg, dataset)
    print(json.dumps({**result, "checkpoint_step": manifest.get("step")}, indent=2))
    return 0


def _cmd_analyze(args) -> int:
    result = analyze(args.run_dir)
    print(json.dumps(
        {
            "n_cells": result["n_cells"],
            "correlation": result["correlation"],
            "hausdorff": [
                {k: row[k] for k in ("pair", "hausdorff", "hausdorff_modified")}
                for row in result["hausdorff_rows"]
            ],
        },
        indent=2,
    ))
    return 0


def _cmd_gen_data(args) -> int:
    spec = SyntheticTaskSpec(**json.loads(open(args.spec, encoding="utf-8").read()))
    mapping = generate_to_files(spec, args.out)
    print(f"wrote {args.out} (remapped {mapping['n_remapped']} byte values, "
          f"overlap {mapping['overlap']:.3f})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="metaxfer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a study from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--method", choices=["target_only", "jt", "jt_rtn", "metaxl"])
    p.add_argument("--seed", type=int)
    p.add_argument("--placement", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a data file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("analyze", help="representation-gap analysis of a run dir")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("gen-data", help="materialize a synthetic corpus pair")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_data)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
