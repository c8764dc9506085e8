"""Config-driven studies: training grids, artifact persistence, analysis.

A study runs every (method, seed, hyperparameter) cell, writing per-cell
checkpoints, loss histories, and representation dumps, plus a summary CSV
whose rows are recomputable from those artifacts. Reruns with an identical
config produce byte-identical metric CSVs, so wall-clock timings live in a
separate file.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .bilevel import TrainConfig, evaluate, train
from .checkpoint import save_checkpoint
from .data import (
    Dataset,
    SyntheticTaskSpec,
    export_dataset,
    generate_pair,
    load_sequence_labeled,
    load_token_labeled,
)
from .encoder import EncoderConfig, forward
from .errors import ContractError
from .metrics import RepresentationSet, hausdorff, hausdorff_modified, pca2, pearson
from .params import ParamSet
from .tensor import no_record

ENV_OUT_ROOT = "METAXFER_OUT"

PRESETS = {
    # three-way comparison: no-transfer floor, joint training, meta transfer
    "table2-shape": {"methods": ["target_only", "jt", "metaxl"]},
    # placement sweep for the transformation hook
    "table5-shape": {"methods": ["metaxl"], "placements": [0, "mid", "last"]},
    # is it the extra capacity or the bi-level training?
    "table6-shape": {"methods": ["jt", "jt_rtn", "metaxl"]},
}

SUMMARY_COLUMNS = [
    "method", "seed", "beta", "placement", "dev_f1", "test_f1",
    "hausdorff_before", "hausdorff_after", "status", "error",
]


@dataclass
class ExperimentConfig:
    encoder: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    synthetic: dict | None = None
    data_paths: dict | None = None
    methods: list = field(default_factory=lambda: ["target_only", "jt", "metaxl"])
    seeds: list = field(default_factory=lambda: [0])
    betas: list = field(default_factory=lambda: [0.05])
    placements: list = field(default_factory=lambda: ["last"])
    out_dir: str = "runs/study"
    rep_cap: int = 300
    preset: str | None = None

    def __post_init__(self):
        if (self.synthetic is None) == (self.data_paths is None):
            raise ContractError("config needs exactly one data source (synthetic XOR data_paths)")
        if self.preset is not None:
            if self.preset not in PRESETS:
                raise ContractError(f"unknown preset {self.preset!r}; have {sorted(PRESETS)}")
            for key, value in PRESETS[self.preset].items():
                setattr(self, key, list(value))
        for m in self.methods:
            if m not in ("target_only", "jt", "jt_rtn", "metaxl"):
                raise ContractError(f"unknown method {m!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def config_hash(self) -> str:
        canonical = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        return ExperimentConfig(**json.loads(text))

    @staticmethod
    def load(path) -> "ExperimentConfig":
        return ExperimentConfig.from_json(Path(path).read_text(encoding="utf-8"))

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(**self.encoder)

    def resolved_out_dir(self) -> Path:
        out = Path(self.out_dir)
        root = os.environ.get(ENV_OUT_ROOT)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out


@dataclass
class StudyReport:
    config_hash: str
    rows: list

    def summary_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config_hash={self.config_hash}\n")
        writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: row.get(k, "") for k in SUMMARY_COLUMNS})
        return buf.getvalue()


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _cell_id(cell: dict) -> str:
    parts = [cell["method"], f"s{cell['seed']}"]
    if cell.get("placement") is not None:
        parts.append(f"p{cell['placement']}")
    if cell.get("beta") is not None:
        parts.append(f"b{cell['beta']:g}")
    return "-".join(parts)


def build_cells(config: ExperimentConfig) -> list[dict]:
    enc = config.encoder_config()

    def resolve_placement(p):
        if p == "mid":
            return enc.n_layers // 2
        if p == "last":
            return enc.n_layers
        return int(p)

    cells = []
    for method in config.methods:
        for seed in config.seeds:
            if method == "metaxl":
                for placement in config.placements:
                    for beta in config.betas:
                        cells.append({
                            "method": method, "seed": int(seed),
                            "placement": resolve_placement(placement), "beta": float(beta),
                        })
            elif method == "jt_rtn":
                for placement in config.placements:
                    cells.append({
                        "method": method, "seed": int(seed),
                        "placement": resolve_placement(placement), "beta": None,
                    })
            else:
                cells.append({"method": method, "seed": int(seed), "placement": None, "beta": None})
    return cells


def _cell_sort_key(row: dict):
    return (
        row["method"],
        row["seed"],
        row["beta"] if row.get("beta") is not None else -1.0,
        row["placement"] if row.get("placement") is not None else -1,
    )


def load_cell_data(config: ExperimentConfig, seed: int):
    """Data for one cell; synthetic corpora derive from the cell seed so
    every seed is an independent language-pair realization."""
    if config.synthetic is not None:
        spec_args = dict(config.synthetic)
        spec_args["seed"] = int(spec_args.get("seed", 0)) + int(seed)
        spec = SyntheticTaskSpec(**spec_args)
        source, targets, mapping = generate_pair(spec)
        return source, targets, mapping
    paths = config.data_paths
    enc = config.encoder_config()
    loader = load_token_labeled if enc.task_kind == "token_labeling" else load_sequence_labeled
    source = loader(paths["source"], role="source") if paths.get("source") else None
    targets = {
        name: loader(paths[name], role="target")
        for name in ("train", "dev", "test")
        if paths.get(name)
    }
    return source, targets, None


def collect_representations(
    theta: ParamSet, enc_cfg: EncoderConfig, dataset: Dataset, cap: int
) -> np.ndarray:
    """Final-layer vectors from the plain encoder: one per labeled token
    position (token labeling) or one CLS vector per example."""
    from .bilevel import collate  # local import to keep module load cheap

    vectors: list[np.ndarray] = []
    with no_record():
        for i in range(0, len(dataset.examples), 32):
            batch = collate(dataset.examples[i : i + 32], "target", enc_cfg)
            _, hiddens = forward(theta, enc_cfg, batch)
            final = hiddens[-1].data
            if enc_cfg.task_kind == "token_labeling":
                keep = (batch.attention_mask > 0) & (batch.labels != -1)
                vectors.extend(final[keep])
            else:
                vectors.extend(final[:, 0, :])
            if len(vectors) >= cap:
                break
    return np.array(vectors[:cap])


def run_cell(config: ExperimentConfig, cell: dict, out_dir: Path) -> dict:
    enc_cfg = config.encoder_config()
    cell_dir = out_dir / "cells" / _cell_id(cell)
    cell_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    row = {
        "method": cell["method"], "seed": cell["seed"],
        "beta": cell["beta"], "placement": cell["placement"],
        "status": "ok", "error": "",
    }
    try:
        source, targets, mapping = load_cell_data(config, cell["seed"])
        train_args = dict(config.train)
        train_args["method"] = cell["method"]
        train_args["seed"] = cell["seed"]
        if cell["beta"] is not None:
            train_args["beta"] = cell["beta"]
        if cell["placement"] is not None:
            train_args["placement"] = cell["placement"]
        cfg = TrainConfig(**train_args)

        theta, state, report = train(
            cfg, enc_cfg, source if cell["method"] != "target_only" else None, targets
        )
        dev = evaluate(theta, enc_cfg, targets["dev"]) if targets.get("dev") else None
        test = evaluate(theta, enc_cfg, targets["test"]) if targets.get("test") else None
        row["dev_f1"] = dev["f1"] if dev else ""
        row["test_f1"] = test["f1"] if test else ""

        level = "token" if enc_cfg.task_kind == "token_labeling" else "sequence"
        reps = {}
        if source is not None and targets.get("test"):
            for language, ds in (("source", source), ("target", targets["test"])):
                vecs = collect_representations(theta, enc_cfg, ds, config.rep_cap)
                reps[language] = vecs
                with open(cell_dir / f"reps_{language}.jsonl", "w", encoding="utf-8") as fh:
                    fh.write(f'{{"config_hash": "{config.config_hash()}"}}\n')
                    for v in vecs:
                        fh.write(json.dumps(
                            {"language": language, "level": level,
                             "vector": [round(float(x), 10) for x in v]}
                        ) + "\n")
        if len(reps) == 2:
            S = RepresentationSet.build(reps["source"], "source", level)
            T = RepresentationSet.build(reps["target"], "target", level)
            row["hausdorff_after"] = hausdorff(S, T)
        else:
            row["hausdorff_after"] = ""

        manifest = {
            "config_hash": config.config_hash(),
            "cell": _cell_id(cell),
            "method": cell["method"],
            "seed": cell["seed"],
            "step": report.best_step,
            "metric": report.best_dev_f1,
            "encoder": config.encoder,
            "tag_names": getattr(targets.get("train"), "tag_names", None),
        }
        save_checkpoint(cell_dir / "checkpoint.npz", {"theta": theta}, manifest)

        with open(cell_dir / "history.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# config_hash={config.config_hash()}\n")
            keys = sorted({k for h in state.history for k in h})
            writer = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            writer.writeheader()
            for h in state.history:
                writer.writerow({k: _fmt(h.get(k)) for k in keys})

        result = dict(row)
        result["evals"] = report.evals
        result["wall_time"] = time.time() - started
        result["config_hash"] = config.config_hash()
        with open(cell_dir / "result.json", "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
        row["wall_time"] = result["wall_time"]
    except Exception as exc:  # isolate failing cells; the study continues
        row.update(
            status="failed",
            error=f"{type(exc).__name__}: {exc}",
            dev_f1="", test_f1="", hausdorff_after="",
            wall_time=time.time() - started,
        )
        (cell_dir / "error.txt").write_text(traceback.format_exc(), encoding="utf-8")
    return row


def _run_cell_worker(args):
    config_json, cell, out_dir = args
    return run_cell(ExperimentConfig.from_json(config_json), cell, Path(out_dir))


def run(config: ExperimentConfig, jobs: int = 1) -> StudyReport:
    out_dir = config.resolved_out_dir()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("ok")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out_dir} is not writable: {exc}") from exc

    (out_dir / "config.json").write_text(config.to_json(), encoding="utf-8")
    cells = build_cells(config)

    if jobs > 1:
        args = [(config.to_json(), cell, str(out_dir)) for cell in cells]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_worker, args))
    else:
        rows = [run_cell(config, cell, out_dir) for cell in cells]

    rows.sort(key=_cell_sort_key)

    # JT reference column: the same-seed jt hausdorff, when present
    jt_h = {
        row["seed"]: row.get("hausdorff_after")
        for row in rows
        if row["method"] == "jt" and row["status"] == "ok"
    }
    for row in rows:
        ref = jt_h.get(row["seed"], "")
        row["hausdorff_before"] = ref if ref != "" else ""

    report = StudyReport(config_hash=config.config_hash(), rows=rows)
    display_rows = []
    for row in rows:
        r = dict(row)
        for key in ("dev_f1", "test_f1", "hausdorff_before", "hausdorff_after", "beta"):
            r[key] = _fmt(r.get(key))
        r["placement"] = "" if r.get("placement") is None else str(r["placement"])
        display_rows.append(r)
    summary = StudyReport(config_hash=config.config_hash(), rows=display_rows).summary_csv()
    (out_dir / "summary.csv").write_text(summary, encoding="utf-8")

    with open(out_dir / "timings.csv", "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell", "wall_time_s"])
        for row in rows:
            writer.writerow([_cell_id(row), f"{row.get('wall_time', 0.0):.2f}"])
    return report


# ---------------------------------------------------------------------------
# analysis

def _read_reps(path: Path) -> tuple[np.ndarray, str, str]:
    vectors = []
    level = "token"
    file_hash = ""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if "config_hash" in rec and "vector" not in rec:
                file_hash = rec["config_hash"]
                continue
            vectors.append(rec["vector"])
            level = rec["level"]
    return np.array(vectors), level, file_hash


def analyze(run_dir) -> dict:
    """Hausdorff + PCA + improvement/reduction correlation from dumps."""
    run_dir = Path(run_dir)
    config_path = run_dir / "config.json"
    if not config_path.exists():
        raise ContractError(f"{run_dir}: missing config.json; run a study first")
    config = ExperimentConfig.from_json(config_path.read_text(encoding="utf-8"))
    expected_hash = config.config_hash()

    cells_dir = run_dir / "cells"
    dumped = sorted(
        d for d in (cells_dir.iterdir() if cells_dir.exists() else [])
        if (d / "reps_source.jsonl").exists() and (d / "reps_target.jsonl").exists()
    )
    if not dumped:
        raise ContractError(
            f"{run_dir}: no representation dumps found; expected "
            "cells/<cell>/reps_source.jsonl and reps_target.jsonl"
        )

    out = run_dir / "analysis"
    out.mkdir(exist_ok=True)
    rows = []
    for cell_dir in dumped:
        src, level, h1 = _read_reps(cell_dir / "reps_source.jsonl")
        tgt, _, h2 = _read_reps(cell_dir / "reps_target.jsonl")
        for h in (h1, h2):
            if h and h != expected_hash:
                raise ContractError(
                    f"{cell_dir.name}: artifact config hash {h} does not match "
                    f"study config {expected_hash}; refusing to mix runs"
                )
        S = RepresentationSet.build(src, "source", level)
        T = RepresentationSet.build(tgt, "target", level)
        rows.append({
            "pair": cell_dir.name,
            "n_source": S.vectors.shape[0],
            "n_target": T.vectors.shape[0],
            "hausdorff": hausdorff(S, T),
            "hausdorff_modified": hausdorff_modified(S, T),
        })
        points, fractions = pca2(np.vstack([S.vectors, T.vectors]))
        with open(out / f"pca_{cell_dir.name}.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# config_hash={expected_hash}\n")
            fh.write(f"# explained={fractions[0]:.6f},{fractions[1]:.6f}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y", "language"])
            languages = ["source"] * S.vectors.shape[0] + ["target"] * T.vectors.shape[0]
            for (x, y), lang in zip(points, languages):
                writer.writerow([f"{x:.6f}", f"{y:.6f}", lang])

    with open(out / "hausdorff.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={expected_hash}\n")
        writer = csv.DictWriter(
            fh, fieldnames=["pair", "n_source", "n_target", "hausdorff", "hausdorff_modified"],
            lineterminator="\n",
        )
        writer.writeheader()
        for row in rows:
            writer.writerow({
                **row,
                "hausdorff": f"{row['hausdorff']:.6f}",
                "hausdorff_modified": f"{row['hausdorff_modified']:.6f}",
            })

    # correlation between F1 improvement and distance reduction, one point
    # per seed (each seed is its own language-pair realization)
    correlation = None
    summary_path = run_dir / "summary.csv"
    if summary_path.exists():
        with open(summary_path, "r", encoding="utf-8") as fh:
            lines = [l for l in fh if not l.startswith("#")]
        table = list(csv.DictReader(lines))
        pairs = []
        for seed in sorted({r["seed"] for r in table}):
            jt = [r for r in table if r["seed"] == seed and r["method"] == "jt" and r["status"] == "ok"]
            mx = [r for r in table if r["seed"] == seed and r["method"] == "metaxl" and r["status"] == "ok"]
            mx = [r for r in mx if r["test_f1"] and r["hausdorff_after"]]
            jt = [r for r in jt if r["test_f1"] and r["hausdorff_after"]]
            if not jt or not mx:
                continue
            best = max(mx, key=lambda r: float(r["dev_f1"] or 0))
            pairs.append((
                float(best["test_f1"]) - float(jt[0]["test_f1"]),
                float(jt[0]["hausdorff_after"]) - float(best["hausdorff_after"]),
            ))
        if len(pairs) >= 3:
            improvements = [p[0] for p in pairs]
            reductions = [p[1] for p in pairs]
            try:
                correlation = pearson(improvements, reductions)
            except ContractError:
                correlation = None
            if correlation is not None:
                with open(out / "correlation.csv", "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(f"# config_hash={expected_hash}\n")
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(["n_pairs", "pearson_f1_gain_vs_hausdorff_drop"])
                    writer.writerow([len(pairs), f"{correlation:.6f}"])

    return {"hausdorff_rows": rows, "correlation": correlation, "n_cells": len(rows)}


def generate_to_files(spec: SyntheticTaskSpec, out_dir) -> dict:
    """Materialize a synthetic pair as interchange files plus the mapping sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    source, targets, mapping = generate_pair(spec)
    ext = "conll" if spec.task_kind == "token_labeling" else "tsv"
    export_dataset(source, out / f"source.{ext}")
    for name, ds in targets.items():
        export_dataset(ds, out / f"target_{name}.{ext}")
    with open(out / "mapping.json", "w", encoding="utf-8") as fh:
        json.dump(mapping, fh, indent=2, sort_keys=True)
    return mapping
