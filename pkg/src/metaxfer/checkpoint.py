"""Checkpoint files: named tensors plus a JSON manifest, round-tripping
bit-exactly through a single .npz archive."""
from __future__ import annotations

import json

import numpy as np

from .errors import ContractError
from .params import ParamSet


def save_checkpoint(path, groups: dict[str, ParamSet], manifest: dict) -> None:
    """groups: e.g. {"theta": ..., "phi": ...}; manifest: config hash, step, metric."""
    arrays = {}
    for group, ps in groups.items():
        if ps is None:
            continue
        for name, tensor in ps.items():
            arrays[f"{group}/{name}"] = tensor.data
    blob = np.frombuffer(json.dumps(manifest, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(path, __manifest__=blob, **arrays)


def load_checkpoint(path) -> tuple[dict[str, ParamSet], dict]:
    with np.load(path) as archive:
        if "__manifest__" not in archive:
            raise ContractError(f"{path}: not a checkpoint (missing manifest)")
        manifest = json.loads(archive["__manifest__"].tobytes().decode("utf-8"))
        grouped: dict[str, dict[str, np.ndarray]] = {}
        for key in archive.files:
            if key == "__manifest__":
                continue
            group, _, name = key.partition("/")
            grouped.setdefault(group, {})[name] = archive[key]
    return {g: ParamSet.from_arrays(arrs) for g, arrs in grouped.items()}, manifest
