"""Checkpoints: one .npz of named tensors plus a JSON manifest.

Round-trips exactly: parameters are stored as float64 without conversion.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..autodiff import nn


def save_checkpoint(
    model: nn.Module, path: str | Path, manifest_extra: dict | None = None
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    np.savez(path, **state)
    manifest = {
        "parameters": {name: list(arr.shape) for name, arr in state.items()},
        "param_count": int(sum(arr.size for arr in state.values())),
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    path.with_suffix(".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_checkpoint(model: nn.Module, path: str | Path) -> dict:
    """Load parameters into `model`; returns the manifest."""
    path = Path(path)
    with np.load(path) as bundle:
        state = {name: bundle[name] for name in bundle.files}
    model.load_state_dict(state)
    manifest_path = path.with_suffix(".manifest.json")
    if manifest_path.exists():
        return json.loads(manifest_path.read_text(encoding="utf-8"))
    return {}
