"""Merge finished run directories into side-by-side comparison tables.

Runs are grouped by experiment type. Within a group every metrics row must
carry the same test-partition hash; mixing runs evaluated on different test
splits is a hard error, never a silent merge.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .runners import MANIFEST_NAME, METRICS_NAME


class MergeError(ValueError):
    """Raised when run directories cannot be combined into one table."""

    def record(self) -> dict:
        return {"type": "MergeError", "message": str(self)}


def _read_manifest_experiment(run_dir: Path) -> str:
    manifest = run_dir / MANIFEST_NAME
    if not manifest.exists():
        raise MergeError(f"{run_dir} has no {MANIFEST_NAME}; not a finished run")
    for line in manifest.read_text().splitlines():
        stripped = line.strip()
        if stripped.startswith("experiment"):
            _, _, value = stripped.partition("=")
            return value.strip()
    raise MergeError(f"{manifest} does not name its experiment")


def _read_metrics(run_dir: Path) -> tuple[list[str], list[dict]]:
    path = run_dir / METRICS_NAME
    if not path.exists():
        raise MergeError(f"{run_dir} has no {METRICS_NAME} to merge")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        header = list(reader.fieldnames or [])
    if "partition_hash" not in header:
        raise MergeError(f"{path} rows carry no partition_hash column")
    return header, rows


def _check_hashes(runs: list[tuple[Path, list[dict]]]) -> str:
    hashes = {}
    for run_dir, rows in runs:
        for row in rows:
            hashes.setdefault(row["partition_hash"], run_dir)
    if len(hashes) > 1:
        desc = ", ".join(
            f"{h[:12]}.. ({d.name})" for h, d in sorted(hashes.items())
        )
        raise MergeError(
            f"test partitions differ across runs; refusing to merge: {desc}"
        )
    return next(iter(hashes))


def _merged_csv(header: list[str], runs: list[tuple[Path, list[dict]]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["run"] + header)
    for run_dir, rows in runs:
        for row in rows:
            writer.writerow([run_dir.name] + [row.get(k, "") for k in header])
    return out.getvalue()


def _leakage_matrix(runs: list[tuple[Path, list[dict]]]) -> str:
    """Models-by-attributes AUC matrix, one block per representation source."""
    sources, attrs, cells = [], [], {}
    for run_dir, rows in runs:
        for row in rows:
            key = (row["source"], row["encoder"], row["cohort"], row["attribute"])
            cells[key] = float(row["auc"])
            if row["source"] not in sources:
                sources.append(row["source"])
            if row["attribute"] not in attrs:
                attrs.append(row["attribute"])
    lines = []
    width = max(10, *(len(a) + 2 for a in attrs))
    row_keys = sorted({(enc, coh) for (_, enc, coh, _) in cells})
    for source in sources:
        lines.append(f"probe source: {source}")
        lines.append(
            "model".ljust(14) + "cohort".ljust(12)
            + "".join(a.rjust(width) for a in attrs)
        )
        for enc, coh in row_keys:
            row = enc.ljust(14) + coh.ljust(12)
            for attr in attrs:
                val = cells.get((source, enc, coh, attr))
                row += ("-" if val is None else f"{val:.3f}").rjust(width)
            lines.append(row)
        lines.append("")
    return "\n".join(lines)


def _sweep_table(runs: list[tuple[Path, list[dict]]]) -> str:
    rows = [row for _, run_rows in runs for row in run_rows]
    rows.sort(key=lambda r: (r["sweep"], float(r["value"])))
    keys = [k for k in rows[0] if k != "partition_hash"]
    lines = ["  ".join(keys)]
    for row in rows:
        lines.append("  ".join(str(row[k]) for k in keys))
    return "\n".join(lines) + "\n"


def _plain_table(runs: list[tuple[Path, list[dict]]]) -> str:
    lines = []
    for run_dir, rows in runs:
        for row in rows:
            cells = [f"{k}={v}" for k, v in row.items() if k != "partition_hash"]
            lines.append(f"{run_dir.name}: " + "  ".join(cells))
    return "\n".join(lines) + "\n"


def merge_runs(run_dirs: list[str | Path]) -> tuple[str, str]:
    """(report.csv text, report.txt text) across runs; hashes must agree."""
    if not run_dirs:
        raise MergeError("no run directories given")
    groups: dict[str, list[tuple[Path, list[dict]]]] = {}
    headers: dict[str, list[str]] = {}
    for raw in run_dirs:
        run_dir = Path(raw)
        experiment = _read_manifest_experiment(run_dir)
        header, rows = _read_metrics(run_dir)
        groups.setdefault(experiment, []).append((run_dir, rows))
        prior = headers.setdefault(experiment, header)
        if prior != header:
            raise MergeError(
                f"{experiment} runs disagree on metrics columns; "
                f"{run_dir.name} does not match earlier runs"
            )

    csv_parts, text_parts = [], []
    for experiment in sorted(groups):
        runs = groups[experiment]
        phash = _check_hashes(runs)
        csv_parts.append(_merged_csv(headers[experiment], runs))
        text_parts.append(
            f"== {experiment} ({len(runs)} run{'s' if len(runs) != 1 else ''}, "
            f"partition {phash[:12]}..) =="
        )
        if experiment in ("audit", "transfer"):
            text_parts.append(_leakage_matrix(runs))
        elif experiment == "steer-eval":
            text_parts.append(_sweep_table(runs))
        else:
            text_parts.append(_plain_table(runs))
    return "\n".join(csv_parts), "\n".join(text_parts) + "\n"
