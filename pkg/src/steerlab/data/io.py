"""Line-delimited dataset files: one JSON object per record.

Keys per line: record_id, x (m arrays of length T), sofa, death_hour
(nullable), sex, age_years, race, comorbidities (object), dataset_tag.
Schema violations are reported with the offending line number.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .records import (
    COMORBIDITY_KEYS,
    RACE_VALUES,
    SEX_VALUES,
    StaticLabels,
    TimeSeriesRecord,
)

_REQUIRED_KEYS = (
    "record_id",
    "x",
    "sofa",
    "death_hour",
    "sex",
    "age_years",
    "race",
    "comorbidities",
    "dataset_tag",
)


class DatasetFormatError(ValueError):
    """Raised when a dataset file violates the record schema."""


def save_dataset(records: list[TimeSeriesRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "record_id": rec.record_id,
                "x": [list(row) for row in rec.x.tolist()],
                "sofa": rec.sofa.tolist(),
                "death_hour": rec.death_hour,
                "sex": rec.statics.sex,
                "age_years": rec.statics.age_years,
                "race": rec.statics.race,
                "comorbidities": {k: bool(v) for k, v in rec.statics.comorbidities.items()},
                "dataset_tag": rec.dataset_tag,
            }
            fh.write(json.dumps(obj) + "\n")


def _parse_line(obj: dict, lineno: int) -> TimeSeriesRecord:
    def fail(msg: str):
        raise DatasetFormatError(f"line {lineno}: {msg}")

    for key in _REQUIRED_KEYS:
        if key not in obj:
            fail(f"missing field {key!r}")

    x_rows = obj["x"]
    if not isinstance(x_rows, list) or not x_rows:
        fail("x must be a non-empty list of channel arrays")
    t_len = len(x_rows[0]) if isinstance(x_rows[0], list) else -1
    for row in x_rows:
        if not isinstance(row, list) or len(row) != t_len:
            fail("x is not rectangular")
    x = np.asarray(x_rows, dtype=np.float64)

    sofa = obj["sofa"]
    if not isinstance(sofa, list) or len(sofa) != t_len:
        fail(f"sofa length must equal T={t_len}")
    sofa_arr = np.asarray(sofa)
    if sofa_arr.size and (sofa_arr.min() < 0 or sofa_arr.max() > 24):
        fail(f"record {obj['record_id']!r}: sofa value out of [0, 24]")

    death_hour = obj["death_hour"]
    if death_hour is not None and (not isinstance(death_hour, int) or death_hour < 1):
        fail("death_hour must be null or a positive integer")
    if obj["sex"] not in SEX_VALUES:
        fail(f"sex must be one of {SEX_VALUES}")
    if obj["race"] not in RACE_VALUES:
        fail(f"race must be one of {RACE_VALUES}")
    com = obj["comorbidities"]
    if not isinstance(com, dict) or set(com) != set(COMORBIDITY_KEYS):
        fail("comorbidities must carry exactly the configured key set")

    try:
        statics = StaticLabels(
            sex=obj["sex"],
            age_years=float(obj["age_years"]),
            race=obj["race"],
            comorbidities={k: bool(com[k]) for k in COMORBIDITY_KEYS},
        )
        return TimeSeriesRecord(
            record_id=str(obj["record_id"]),
            x=x,
            statics=statics,
            sofa=sofa_arr.astype(np.int64),
            death_hour=death_hour,
            dataset_tag=str(obj["dataset_tag"]),
        )
    except ValueError as exc:
        fail(str(exc))
    raise AssertionError("unreachable")


def load_dataset(path: str | Path) -> list[TimeSeriesRecord]:
    path = Path(path)
    records: list[TimeSeriesRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc})") from exc
            if not isinstance(obj, dict):
                raise DatasetFormatError(f"line {lineno}: expected an object")
            records.append(_parse_line(obj, lineno))
    return records
