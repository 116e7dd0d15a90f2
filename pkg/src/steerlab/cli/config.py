"""Flat key = value experiment configs with per-key validation.

One schema per subcommand. A config file holds `key = value` lines (values in
JSON syntax, bare text falls back to a string), `#` comments, and blank
lines. Unknown or ill-typed keys are rejected with the key name and line
number. `--set key=value` overrides win over file values.

A manifest is a config file with every default materialized, so any run can
be reproduced from its manifest alone; run metadata that is not part of the
config (artifact names, partition hash) rides along as comments.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

OUTPUT_ROOT_ENV = "STEERLAB_OUT_ROOT"

EXPERIMENTS = (
    "generate",
    "train-task",
    "audit",
    "transfer",
    "fuse-study",
    "steer-train",
    "steer-eval",
)


class ConfigError(ValueError):
    """Config problem tied to a key and, when file-borne, a line number."""

    def __init__(self, message: str, key: str | None = None,
                 line: int | None = None):
        super().__init__(message)
        self.key = key
        self.line = line

    def record(self) -> dict:
        out = {"type": "ConfigError", "message": str(self)}
        if self.key is not None:
            out["key"] = self.key
        if self.line is not None:
            out["line"] = self.line
        return out


_COMMON = {"seed": 0}

_GENERATOR = {
    "n_records": 500,
    "m": 8,
    "t_min": 24,
    "t_max": 72,
    "leak_strength": {},
    "noise_std": 1.0,
    "ou_sigma": 1.2,
    "site_shift": 0.0,
    "static_target_effect": 0.0,
    "comorbidity_severity_coupling": 0.7,
    "unknown_sex_rate": 0.02,
    "other_race_rate": 0.10,
    "dataset_tag": "synth",
    "structure_seed": None,
}

_TRAIN = {
    "split_seed": 0,
    "lr": 1e-3,
    "epochs": 20,
    "batch_size": 32,
    "optimizer": "adam",
    "n_boot": 1000,
}

_BACKBONE = {"encoder": "tcn", "scale": 0.125}

_PROBING = {
    "attributes": ["sex", "age_class", "race"],
    "probe_sources": ["raw", "hidden"],
    "probe_epochs": 50,
    "pooling": "masked-mean",
}

_STEER = {
    "beta": 1e-4,
    "gamma": 0.5,
    "alpha": 0.5,
    "theta": 1.0,
    "nz": 8,
    "sensitive_dim": 1,
    "latent_mode": "per-timestep",
    "scale_elbo_by_T": False,
}

SCHEMAS: dict[str, dict] = {
    "generate": {**_COMMON, **_GENERATOR, "dataset_name": "dataset.jsonl"},
    "train-task": {**_COMMON, "dataset": "", "task": "sofa", **_BACKBONE, **_TRAIN},
    "audit": {
        **_COMMON, "dataset": "", "task": "sofa", **_BACKBONE, **_TRAIN,
        **_PROBING,
    },
    "transfer": {
        **_COMMON, "dataset": "", "foreign_dataset": "", "task": "sofa",
        **_BACKBONE, **_TRAIN, **_PROBING,
    },
    "fuse-study": {
        **_COMMON, "dataset": "", "scale": 0.125, "regularization": "l1",
        **_TRAIN,
    },
    "steer-train": {
        **_COMMON, "dataset": "", "task": "sofa", "scale": 0.125, **_TRAIN,
        **_STEER,
    },
    "steer-eval": {
        **_COMMON, "dataset": "", "task": "sofa", "scale": 0.125, **_TRAIN,
        **_STEER, "probe_epochs": 50, "sweep": "theta",
        "sweep_grid": [],
    },
}

# keys that accept `null` in place of their scalar type
_NULLABLE = {"structure_seed"}


def _parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw  # bare string such as a path or task name


def _coerce(key: str, value, default, line: int | None):
    """Fit `value` to the schema slot's type, or raise naming key and line."""
    where = f" (line {line})" if line is not None else ""
    if value is None:
        if key in _NULLABLE or default is None:
            return None
        raise ConfigError(f"key {key!r} cannot be null{where}", key, line)
    if default is None or (default is not None and key in _NULLABLE):
        target = int
    else:
        target = type(default)
    if target is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(
            f"key {key!r} expects true/false, got {value!r}{where}", key, line
        )
    if target is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(
                f"key {key!r} expects an integer, got {value!r}{where}", key, line
            )
        if isinstance(value, float) and value != int(value):
            raise ConfigError(
                f"key {key!r} expects an integer, got {value!r}{where}", key, line
            )
        return int(value)
    if target is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(
                f"key {key!r} expects a number, got {value!r}{where}", key, line
            )
        return float(value)
    if target is str:
        if not isinstance(value, str):
            raise ConfigError(
                f"key {key!r} expects a string, got {value!r}{where}", key, line
            )
        return value
    if target is list:
        if not isinstance(value, list):
            raise ConfigError(
                f"key {key!r} expects a list, got {value!r}{where}", key, line
            )
        return value
    if target is dict:
        if not isinstance(value, dict):
            raise ConfigError(
                f"key {key!r} expects an object, got {value!r}{where}", key, line
            )
        return value
    raise ConfigError(f"key {key!r} has unsupported schema type{where}", key, line)


def parse_config_file(path: str | Path) -> list[tuple[str, object, int]]:
    """Read (key, parsed value, line number) triples; syntax errors name lines."""
    entries = []
    seen: dict[str, int] = {}
    text = Path(path).read_text()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        stripped = raw_line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"line {lineno} is not `key = value`: {stripped!r}", line=lineno
            )
        key, _, raw_value = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"empty key on line {lineno}", line=lineno)
        if key in seen:
            raise ConfigError(
                f"key {key!r} set twice (lines {seen[key]} and {lineno})",
                key, lineno,
            )
        seen[key] = lineno
        entries.append((key, _parse_value(raw_value), lineno))
    return entries


def resolve(experiment: str, config_path: str | Path | None,
            overrides: list[str] | None = None) -> dict:
    """Schema defaults <- config file <- --set overrides, fully validated."""
    if experiment not in SCHEMAS:
        raise ConfigError(
            f"unknown experiment {experiment!r}; valid: {EXPERIMENTS}"
        )
    schema = SCHEMAS[experiment]
    cfg = dict(schema)
    if config_path is not None:
        for key, value, lineno in parse_config_file(config_path):
            if key == "experiment":
                if value != experiment:
                    raise ConfigError(
                        f"config is for experiment {value!r}, not {experiment!r} "
                        f"(line {lineno})", key, lineno,
                    )
                continue
            if key not in schema:
                raise ConfigError(
                    f"unknown key {key!r} for {experiment} (line {lineno})",
                    key, lineno,
                )
            cfg[key] = _coerce(key, value, schema[key], lineno)
    for pair in overrides or []:
        if "=" not in pair:
            raise ConfigError(f"--set needs key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        key = key.strip()
        if key == "experiment":
            raise ConfigError("the experiment is fixed by the subcommand", key)
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for {experiment}", key)
        cfg[key] = _coerce(key, _parse_value(raw), schema[key], None)
    return cfg


def _render_value(value) -> str:
    if isinstance(value, str):
        return value if value else '""'
    return json.dumps(value)


def manifest_text(experiment: str, cfg: dict, extras: dict | None = None) -> str:
    """Render a manifest that is itself a valid config for `experiment`."""
    lines = [
        "# manifest: rerun with "
        f"`steerlab {experiment} --config <this file> --out <dir>`",
        f"experiment = {experiment}",
    ]
    for key in SCHEMAS[experiment]:
        lines.append(f"{key} = {_render_value(cfg[key])}")
    for key, value in (extras or {}).items():
        lines.append(f"# {key}: {value}")
    return "\n".join(lines) + "\n"


def resolve_out_dir(out_flag: str | None, experiment: str) -> Path:
    """--out wins; otherwise nest under the env-var output root."""
    if out_flag:
        return Path(out_flag)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root:
        return Path(root) / experiment
    raise ConfigError(
        f"no output directory: pass --out or set {OUTPUT_ROOT_ENV}"
    )
