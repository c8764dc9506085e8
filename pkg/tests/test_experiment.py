"""Study runner: grid shapes, artifact layout, determinism, analysis gating."""
import json
import os
from pathlib import Path

import numpy as np
import pytest

from metaxfer.checkpoint import load_checkpoint, save_checkpoint
from metaxfer.errors import ContractError
from metaxfer.experiment import (
    ENV_OUT_ROOT,
    ExperimentConfig,
    analyze,
    build_cells,
    generate_to_files,
    run,
)
from metaxfer.params import ParamSet
from metaxfer.tensor import Tensor


def tiny_config(tmp_path, **kw):
    base = dict(
        encoder=dict(
            d_model=8, n_layers=2, n_heads=2, d_ffn=12, max_len=16,
            task_kind="token_labeling", n_labels=3,
        ),
        train=dict(
            alpha=0.2, beta=0.2, steps=12, batch_source=4, batch_target=4,
            bottleneck_r=3, eval_every=6,
        ),
        synthetic=dict(
            task_kind="token_labeling", n_labels=3, shift=0.5,
            vocab_low=32, vocab_high=95, entity_rate=0.3,
            entity_pool_bytes=4, seq_len=(5, 8), sizes=(30, 12, 8, 8), seed=0,
        ),
        methods=["jt", "metaxl"],
        seeds=[0],
        betas=[0.2],
        placements=["last"],
        out_dir=str(tmp_path / "study"),
        rep_cap=40,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_requires_exactly_one_data_source(tmp_path):
    with pytest.raises(ContractError):
        ExperimentConfig(out_dir=str(tmp_path))  # neither
    with pytest.raises(ContractError):
        ExperimentConfig(
            synthetic={"task_kind": "token_labeling"},
            data_paths={"train": "x"},
            out_dir=str(tmp_path),
        )


def test_config_hash_stable_across_field_order(tmp_path):
    a = tiny_config(tmp_path)
    blob = json.loads(a.to_json())
    reordered = {k: blob[k] for k in sorted(blob, reverse=True)}
    b = ExperimentConfig(**reordered)
    assert a.config_hash() == b.config_hash()


def test_preset_grid_shapes(tmp_path):
    cfg = tiny_config(tmp_path, preset="table2-shape", seeds=[0, 1, 2])
    cells = build_cells(cfg)
    assert len(cells) == 9  # 3 methods x 3 seeds
    cfg5 = tiny_config(tmp_path, preset="table5-shape", seeds=[0])
    cells5 = build_cells(cfg5)
    assert [c["placement"] for c in cells5] == [0, 1, 2]
    cfg6 = tiny_config(tmp_path, preset="table6-shape", seeds=[0])
    assert {c["method"] for c in build_cells(cfg6)} == {"jt", "jt_rtn", "metaxl"}


def test_run_writes_artifacts_and_summary(tmp_path):
    cfg = tiny_config(tmp_path)
    report = run(cfg)
    out = Path(cfg.out_dir)
    assert (out / "config.json").exists()
    summary = (out / "summary.csv").read_text()
    assert summary.startswith(f"# config_hash={cfg.config_hash()}")
    assert len(report.rows) == 2
    for row in report.rows:
        assert row["status"] == "ok", row
        cell = out / "cells" / f"{row['method']}-s0" if row["method"] == "jt" else None
    jt_dir = out / "cells" / "jt-s0"
    mx_dir = out / "cells" / "metaxl-s0-p2-b0.2"
    for d in (jt_dir, mx_dir):
        assert (d / "checkpoint.npz").exists()
        assert (d / "history.csv").exists()
        assert (d / "result.json").exists()
        assert (d / "reps_source.jsonl").exists()
        assert (d / "reps_target.jsonl").exists()
    # timings live outside the deterministic summary
    assert (out / "timings.csv").exists()
    assert "wall_time" not in summary


def test_rerun_is_byte_identical(tmp_path):
    cfg_a = tiny_config(tmp_path, out_dir=str(tmp_path / "a"))
    cfg_b = tiny_config(tmp_path, out_dir=str(tmp_path / "b"))
    run(cfg_a)
    run(cfg_b)
    a = (Path(cfg_a.out_dir) / "summary.csv").read_bytes()
    b = (Path(cfg_b.out_dir) / "summary.csv").read_bytes()
    assert a == b


def test_failed_cell_is_isolated(tmp_path):
    # an out-of-range placement fails the metaxl cell but not the jt cell
    cfg = tiny_config(tmp_path, placements=[7])
    report = run(cfg)
    by_method = {r["method"]: r for r in report.rows}
    assert by_method["jt"]["status"] == "ok"
    assert by_method["metaxl"]["status"] == "failed"
    assert "placement" in by_method["metaxl"]["error"]


def test_unwritable_out_dir_fails_before_training(tmp_path):
    blocked = tmp_path / "blocked"
    blocked.write_text("a file, not a directory")
    cfg = tiny_config(tmp_path, out_dir=str(blocked / "study"))
    with pytest.raises(OSError):
        run(cfg)


def test_env_var_out_root(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUT_ROOT, str(tmp_path / "root"))
    cfg = tiny_config(tmp_path, out_dir="rel-study")
    assert cfg.resolved_out_dir() == tmp_path / "root" / "rel-study"


def test_analyze_outputs_and_hash_guard(tmp_path):
    cfg = tiny_config(tmp_path)
    run(cfg)
    out = Path(cfg.out_dir)
    result = analyze(out)
    assert result["n_cells"] == 2
    assert (out / "analysis" / "hausdorff.csv").exists()
    assert (out / "analysis" / "pca_jt-s0.csv").exists()
    # correlation needs >= 3 language pairs (seeds); one seed -> absent
    assert result["correlation"] is None
    assert not (out / "analysis" / "correlation.csv").exists()

    # tamper with one dump's hash: analysis must refuse
    dump = out / "cells" / "jt-s0" / "reps_source.jsonl"
    lines = dump.read_text().splitlines()
    lines[0] = '{"config_hash": "deadbeef"}'
    dump.write_text("\n".join(lines) + "\n")
    with pytest.raises(ContractError):
        analyze(out)


def test_analyze_missing_dumps_is_actionable(tmp_path):
    out = tmp_path / "empty-run"
    out.mkdir()
    cfg = tiny_config(tmp_path, out_dir=str(out))
    (out / "config.json").write_text(cfg.to_json())
    with pytest.raises(ContractError) as exc:
        analyze(out)
    assert "reps_source.jsonl" in str(exc.value)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    theta = ParamSet({
        "w": Tensor(rng.normal(size=(5, 3)), requires_grad=True),
        "b": Tensor(rng.normal(size=3), requires_grad=True),
    })
    manifest = {"config_hash": "abc", "step": 17, "metric": 0.75}
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, {"theta": theta}, manifest)
    groups, loaded = load_checkpoint(path)
    assert loaded == manifest
    assert groups["theta"].equals(theta)


def test_gen_data_writes_files_and_mapping(tmp_path):
    from metaxfer.data import SyntheticTaskSpec, load_token_labeled

    spec = SyntheticTaskSpec(
        task_kind="token_labeling", n_labels=3, shift=0.5,
        vocab_low=32, vocab_high=95, entity_pool_bytes=4,
        seq_len=(5, 8), sizes=(10, 6, 4, 4), seed=2,
    )
    mapping = generate_to_files(spec, tmp_path / "data")
    assert (tmp_path / "data" / "source.conll").exists()
    assert (tmp_path / "data" / "target_train.conll").exists()
    sidecar = json.loads((tmp_path / "data" / "mapping.json").read_text())
    assert sidecar["n_remapped"] == mapping["n_remapped"] == 32
    ds = load_token_labeled(tmp_path / "data" / "source.conll")
    assert len(ds) == 10
