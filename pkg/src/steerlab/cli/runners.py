"""One function per subcommand: resolved config in, artifact files out.

Every runner writes a manifest (a rerunnable config), a metrics.csv whose
rows all carry the test-partition hash, and a human-readable report.txt;
model-producing runs add checkpoint.npz. Artifact content is a pure function
of the config, so re-running a manifest overwrites every file identically.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from ..data import (
    SynthConfig,
    generate_cohort,
    load_dataset,
    partition_hash,
    save_dataset,
    split,
)
from ..fusion import default_study_specs, fusion_study, study_to_text
from ..probing import cross_dataset_eval, leakage_audit
from ..seqmodels import EncoderConfig, TaskModel
from ..steer import SteerHyperparams, disentanglement_eval, train_steer
from ..training import TrainConfig, evaluate_task, train_task
from .config import SCHEMAS, ConfigError, manifest_text

_BASE_SALT = 0xBA5E

MANIFEST_NAME = "manifest.cfg"
METRICS_NAME = "metrics.csv"
REPORT_NAME = "report.txt"
CHECKPOINT_NAME = "checkpoint.npz"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _save_checkpoint(path: Path, model) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **model.state_dict())


def _require_dataset(cfg: dict, key: str = "dataset") -> list:
    path = cfg[key]
    if not path:
        raise ConfigError(f"key {key!r} is required (path to a dataset file)", key)
    if not Path(path).exists():
        raise ConfigError(f"dataset file not found: {path}", key)
    records = load_dataset(path)
    if not records:
        raise ConfigError(f"dataset file {path} holds no records", key)
    return records


def _train_cfg(cfg: dict) -> TrainConfig:
    return TrainConfig(
        lr=cfg["lr"], epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        seed=cfg["seed"], optimizer=cfg["optimizer"],
    )


def _encoder_cfg(cfg: dict, records, kind: str | None = None) -> EncoderConfig:
    return EncoderConfig(
        kind=kind or cfg["encoder"], in_channels=records[0].m,
        scale=cfg["scale"],
    )


def _fit_task_model(cfg: dict, records, kind: str | None = None):
    parts = split(records, seed=cfg["split_seed"])
    enc = _encoder_cfg(cfg, records, kind)
    model = TaskModel(enc, cfg["task"], np.random.default_rng([cfg["seed"], _BASE_SALT]))
    train_task(model, parts, cfg["task"], _train_cfg(cfg))
    return model, parts, partition_hash(parts)


def run_generate(cfg: dict, out: Path) -> dict:
    synth = SynthConfig(
        n_records=cfg["n_records"],
        m=cfg["m"],
        t_range=(cfg["t_min"], cfg["t_max"]),
        leak_strength={k: float(v) for k, v in cfg["leak_strength"].items()},
        noise_std=cfg["noise_std"],
        ou_sigma=cfg["ou_sigma"],
        site_shift=cfg["site_shift"],
        seed=cfg["seed"],
        dataset_tag=cfg["dataset_tag"],
        structure_seed=cfg["structure_seed"],
        static_target_effect=cfg["static_target_effect"],
        comorbidity_severity_coupling=cfg["comorbidity_severity_coupling"],
        unknown_sex_rate=cfg["unknown_sex_rate"],
        other_race_rate=cfg["other_race_rate"],
    )
    records = generate_cohort(synth)
    dataset_path = out / cfg["dataset_name"]
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(records, dataset_path)

    n_female = sum(1 for r in records if r.statics.sex == "female")
    n_dead = sum(1 for r in records if r.death_hour is not None)
    lines = [
        f"cohort {cfg['dataset_tag']}: {len(records)} records, "
        f"m={cfg['m']}, T in [{cfg['t_min']}, {cfg['t_max']}]",
        f"female {n_female}/{len(records)}, in-hospital deaths {n_dead}",
        f"planted leakage: {cfg['leak_strength'] or 'none'}",
    ]
    _write(out / REPORT_NAME, "\n".join(lines) + "\n")
    _write(out / MANIFEST_NAME,
           manifest_text("generate", cfg, {"dataset": dataset_path.name}))
    return {"dataset": str(dataset_path), "n_records": len(records)}


def run_train_task(cfg: dict, out: Path) -> dict:
    records = _require_dataset(cfg)
    model, parts, phash = _fit_task_model(cfg, records)
    report = evaluate_task(
        model, parts["test"], cfg["task"], n_boot=cfg["n_boot"], seed=cfg["seed"]
    )
    metric = "rmse" if cfg["task"] == "sofa" else "auc"
    csv = io.StringIO()
    csv.write("encoder,task,metric,point,ci_low,ci_high,n_boot,partition_hash\n")
    csv.write(
        f"{cfg['encoder']},{cfg['task']},{metric},{report.point:.6f},"
        f"{report.ci_low:.6f},{report.ci_high:.6f},{report.n_boot},{phash}\n"
    )
    _write(out / METRICS_NAME, csv.getvalue())
    _write(out / REPORT_NAME,
           f"{cfg['encoder']} on {cfg['task']}: {report.to_text()}\n")
    _save_checkpoint(out / CHECKPOINT_NAME, model)
    _write(out / MANIFEST_NAME,
           manifest_text("train-task", cfg, {"partition_hash": phash}))
    return {"metric": metric, "point": report.point, "partition_hash": phash}


def _leakage_csv(rows: list[tuple[str, str, str, object]], phash: str) -> str:
    out = io.StringIO()
    out.write(
        "encoder,cohort,source,attribute,auc,ci_low,ci_high,n_boot,partition_hash\n"
    )
    for encoder, cohort, key, rep in rows:
        source, attr = key
        out.write(
            f"{encoder},{cohort},{source},{attr},{rep.point:.6f},"
            f"{rep.ci_low:.6f},{rep.ci_high:.6f},{rep.n_boot},{phash}\n"
        )
    return out.getvalue()


def run_audit(cfg: dict, out: Path) -> dict:
    records = _require_dataset(cfg)
    model, parts, phash = _fit_task_model(cfg, records)
    report = leakage_audit(
        model, parts, list(cfg["attributes"]),
        sources=tuple(cfg["probe_sources"]), pooling=cfg["pooling"],
        n_boot=cfg["n_boot"], seed=cfg["seed"], probe_epochs=cfg["probe_epochs"],
    )
    rows = [
        (cfg["encoder"], "home-test", key, rep)
        for key, rep in sorted(report.cells.items())
    ]
    _write(out / METRICS_NAME, _leakage_csv(rows, phash))
    utility = evaluate_task(
        model, parts["test"], cfg["task"], n_boot=cfg["n_boot"], seed=cfg["seed"]
    )
    _write(out / REPORT_NAME,
           report.to_text() + f"\ntask utility: {utility.to_text()}\n")
    _save_checkpoint(out / CHECKPOINT_NAME, model)
    _write(out / MANIFEST_NAME, manifest_text("audit", cfg, {"partition_hash": phash}))
    return {"cells": len(report.cells), "partition_hash": phash}


def run_transfer(cfg: dict, out: Path) -> dict:
    records = _require_dataset(cfg)
    foreign = _require_dataset(cfg, "foreign_dataset")
    if foreign[0].m != records[0].m:
        raise ConfigError(
            f"channel mismatch: home m={records[0].m}, foreign m={foreign[0].m}",
            "foreign_dataset",
        )
    model, parts, phash = _fit_task_model(cfg, records)
    home = leakage_audit(
        model, parts, list(cfg["attributes"]),
        sources=tuple(cfg["probe_sources"]), pooling=cfg["pooling"],
        n_boot=cfg["n_boot"], seed=cfg["seed"], probe_epochs=cfg["probe_epochs"],
    )
    away = cross_dataset_eval(
        model, home.probes, foreign, home.age_median,
        train_tag=home.train_tag, n_boot=cfg["n_boot"], seed=cfg["seed"],
    )
    rows = [
        (cfg["encoder"], "home-test", key, rep)
        for key, rep in sorted(home.cells.items())
    ] + [
        (cfg["encoder"], "foreign", key, rep)
        for key, rep in sorted(away.cells.items())
    ]
    _write(out / METRICS_NAME, _leakage_csv(rows, phash))
    _write(out / REPORT_NAME, home.to_text() + "\n" + away.to_text())
    _save_checkpoint(out / CHECKPOINT_NAME, model)
    _write(out / MANIFEST_NAME,
           manifest_text("transfer", cfg, {"partition_hash": phash}))
    return {"cells": len(rows), "partition_hash": phash}


def run_fuse_study(cfg: dict, out: Path) -> dict:
    records = _require_dataset(cfg)
    parts = split(records, seed=cfg["split_seed"])
    phash = partition_hash(parts)
    enc = EncoderConfig(kind="tcn", in_channels=records[0].m, scale=cfg["scale"])
    rows = fusion_study(
        parts, default_study_specs(cfg["regularization"]), enc,
        _train_cfg(cfg), n_boot=cfg["n_boot"], eval_seed=cfg["seed"],
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["config", "rmse", "ci_low", "ci_high", "n_boot", "partition_hash"])
    for row in rows:
        r = row.rmse
        writer.writerow(
            [row.label, f"{r.point:.6f}", f"{r.ci_low:.6f}", f"{r.ci_high:.6f}",
             r.n_boot, phash]
        )
    _write(out / METRICS_NAME, buf.getvalue())
    _write(out / REPORT_NAME, study_to_text(rows))
    _write(out / MANIFEST_NAME,
           manifest_text("fuse-study", cfg, {"partition_hash": phash}))
    return {"configs": len(rows), "partition_hash": phash}


def _steer_hyperparams(cfg: dict) -> SteerHyperparams:
    return SteerHyperparams(
        beta=cfg["beta"], gamma=cfg["gamma"], alpha=cfg["alpha"],
        theta=cfg["theta"], scale_elbo_by_T=cfg["scale_elbo_by_T"],
        nz=cfg["nz"], sensitive_dim=cfg["sensitive_dim"],
        latent_mode=cfg["latent_mode"],
    )


def run_steer_train(cfg: dict, out: Path) -> dict:
    records = _require_dataset(cfg)
    parts = split(records, seed=cfg["split_seed"])
    phash = partition_hash(parts)
    enc = EncoderConfig(kind="tcn", in_channels=records[0].m, scale=cfg["scale"])
    model, history = train_steer(
        parts["train"], enc, _steer_hyperparams(cfg), _train_cfg(cfg),
        task=cfg["task"],
    )
    _write(out / "history.csv", history.to_csv())
    last = history.rows[-1]
    csv = io.StringIO()
    keys = list(last)
    csv.write(",".join(keys) + ",partition_hash\n")
    csv.write(",".join(f"{last[k]:.6g}" for k in keys) + f",{phash}\n")
    _write(out / METRICS_NAME, csv.getvalue())
    lines = [f"{k} = {last[k]:.6g}" for k in keys]
    _write(out / REPORT_NAME,
           "final training epoch\n" + "\n".join(lines) + "\n")
    _save_checkpoint(out / CHECKPOINT_NAME, model)
    _write(out / MANIFEST_NAME,
           manifest_text("steer-train", cfg, {"partition_hash": phash}))
    return {"epochs": len(history.rows), "partition_hash": phash}


def _grid_label(value: float) -> str:
    return f"{value:g}"


def run_steer_eval(cfg: dict, out: Path) -> dict:
    if cfg["sweep"] not in ("theta", "alpha"):
        raise ConfigError(
            f"sweep must be 'theta' or 'alpha', got {cfg['sweep']!r}", "sweep"
        )
    records = _require_dataset(cfg)
    parts = split(records, seed=cfg["split_seed"])
    phash = partition_hash(parts)
    enc = EncoderConfig(kind="tcn", in_channels=records[0].m, scale=cfg["scale"])
    grid = [float(v) for v in cfg["sweep_grid"]] or [float(cfg[cfg["sweep"]])]

    attrs = _steer_hyperparams(cfg).attributes
    header = ["sweep", "value", "task_metric", "task_point", "task_lo", "task_hi"]
    for attr in attrs:
        header += [f"auc_b_{attr}", f"auc_b_{attr}_lo", f"auc_b_{attr}_hi"]
        header += [f"auc_z_{attr}", f"auc_z_{attr}_lo", f"auc_z_{attr}_hi"]
    header += ["n_boot", "partition_hash"]

    csv_rows = []
    for value in grid:
        sub_cfg = dict(cfg, **{cfg["sweep"]: value})
        h = _steer_hyperparams(sub_cfg)
        model, history = train_steer(
            parts["train"], enc, h, _train_cfg(cfg), task=cfg["task"]
        )
        rep = disentanglement_eval(
            model, parts, seed=cfg["seed"], n_boot=cfg["n_boot"],
            probe_epochs=cfg["probe_epochs"],
        )
        sub_out = out / f"sweep-{cfg['sweep']}-{_grid_label(value)}"
        _write(sub_out / "history.csv", history.to_csv())
        _save_checkpoint(sub_out / CHECKPOINT_NAME, model)
        child = {k: sub_cfg[k] for k in SCHEMAS["steer-train"]}
        _write(sub_out / MANIFEST_NAME,
               manifest_text("steer-train", child, {"partition_hash": phash}))
        _write(sub_out / "eval.csv", rep.to_csv())

        u = rep.utility
        row = [
            cfg["sweep"], _grid_label(value), u.metric_name,
            f"{u.point:.6f}", f"{u.ci_low:.6f}", f"{u.ci_high:.6f}",
        ]
        for attr in attrs:
            for table in (rep.auc_from_b, rep.auc_from_z):
                cell = table[attr]
                row += [f"{cell.point:.6f}", f"{cell.ci_low:.6f}",
                        f"{cell.ci_high:.6f}"]
        row += [str(cfg["n_boot"]), phash]
        csv_rows.append(",".join(row))

    _write(out / METRICS_NAME, ",".join(header) + "\n" + "\n".join(csv_rows) + "\n")
    text = [f"{cfg['sweep']} sweep over {[float(g) for g in grid]}"]
    for line in csv_rows:
        cells = line.split(",")
        text.append("  ".join(f"{k}={v}" for k, v in zip(header, cells)))
    _write(out / REPORT_NAME, "\n".join(text) + "\n")
    _write(out / MANIFEST_NAME,
           manifest_text("steer-eval", cfg, {"partition_hash": phash}))
    return {"rows": len(csv_rows), "partition_hash": phash}


RUNNERS = {
    "generate": run_generate,
    "train-task": run_train_task,
    "audit": run_audit,
    "transfer": run_transfer,
    "fuse-study": run_fuse_study,
    "steer-train": run_steer_train,
    "steer-eval": run_steer_eval,
}
