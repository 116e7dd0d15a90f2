"""Cohort filtering, task label construction, and static-attribute binarization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import COMORBIDITY_KEYS, TimeSeriesRecord

AGE_MIN = 18.0
T_MIN = 24
T_MAX = 240

IHM_WINDOW_H = 48
IHM_GAP_H = 6
SOFA_HORIZON_H = 24


def filter_cohort(records: list[TimeSeriesRecord]) -> list[TimeSeriesRecord]:
    """Keep adults with stays between 24 and 240 hours inclusive."""
    return [
        r
        for r in records
        if r.statics.age_years >= AGE_MIN and T_MIN <= r.T <= T_MAX
    ]


def make_ihm_labels(
    records: list[TimeSeriesRecord],
    window_h: int = IHM_WINDOW_H,
    gap_h: int = IHM_GAP_H,
) -> tuple[list[TimeSeriesRecord], np.ndarray]:
    """Mortality labels from the first `window_h` hours.

    Records shorter than the window are excluded, as are records whose death
    falls before window_h + gap_h (the label would leak into the window).
    Kept records are truncated to the window. Label 1 = died in hospital.
    """
    kept: list[TimeSeriesRecord] = []
    labels: list[int] = []
    horizon = window_h + gap_h
    for rec in records:
        if rec.T < window_h:
            continue
        if rec.death_hour is not None and rec.death_hour < horizon:
            continue
        kept.append(
            TimeSeriesRecord(
                record_id=rec.record_id,
                x=rec.x[:, :window_h].copy(),
                statics=rec.statics,
                sofa=rec.sofa[:window_h].copy(),
                death_hour=rec.death_hour,
                dataset_tag=rec.dataset_tag,
            )
        )
        labels.append(0 if rec.death_hour is None else 1)
    return kept, np.asarray(labels, dtype=np.int64)


def make_sofa_targets(
    record: TimeSeriesRecord, horizon_h: int = SOFA_HORIZON_H
) -> np.ndarray:
    """Per-step forecasting targets: target at input step i is sofa[i + P].

    Strictly causal alignment: the prediction paired with the i-th input hour
    may use only hours 1..i. Defined for the first T - P steps.
    """
    if record.T <= horizon_h:
        raise ValueError(
            f"record {record.record_id!r}: T={record.T} <= horizon {horizon_h}"
        )
    return record.sofa[horizon_h:].astype(np.float64)


@dataclass
class StaticLabelTable:
    """Binary attribute labels aligned to record_ids; -1 marks exclusion."""

    record_ids: list[str]
    labels: dict[str, np.ndarray]
    age_median: float

    @property
    def attributes(self) -> list[str]:
        return list(self.labels)

    def pair(self, attribute: str) -> tuple[np.ndarray, np.ndarray]:
        """(kept index array, 0/1 labels) for one attribute."""
        lab = self.labels[attribute]
        keep = np.flatnonzero(lab >= 0)
        return keep, lab[keep]


def binarize_statics(
    records: list[TimeSeriesRecord], *, age_median: float | None = None
) -> StaticLabelTable:
    """Reduce statics to binary tasks.

    sex: female=1, male=0, unknown excluded. age_class: at-or-above the
    median=1 (median taken from `age_median` when given, so a training-split
    value can be frozen and reused). race: black=1, white=0, other excluded.
    Comorbidity flags pass through as 0/1.
    """
    ages = np.asarray([r.statics.age_years for r in records], dtype=np.float64)
    if age_median is None:
        age_median = float(np.median(ages)) if ages.size else 0.0

    n = len(records)
    labels: dict[str, np.ndarray] = {
        "sex": np.full(n, -1, dtype=np.int64),
        "age_class": np.full(n, -1, dtype=np.int64),
        "race": np.full(n, -1, dtype=np.int64),
    }
    for key in COMORBIDITY_KEYS:
        labels[key] = np.zeros(n, dtype=np.int64)

    for i, rec in enumerate(records):
        s = rec.statics
        if s.sex != "unknown":
            labels["sex"][i] = 1 if s.sex == "female" else 0
        labels["age_class"][i] = 1 if s.age_years >= age_median else 0
        if s.race in ("black", "white"):
            labels["race"][i] = 1 if s.race == "black" else 0
        for key in COMORBIDITY_KEYS:
            labels[key][i] = 1 if s.comorbidities[key] else 0

    return StaticLabelTable(
        record_ids=[r.record_id for r in records],
        labels=labels,
        age_median=age_median,
    )
