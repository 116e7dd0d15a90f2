"""Record containers shared by the generator, loaders, tasks, and batching.

Shape conventions
-----------------
x      : (m, T) float64, m channels by T hourly steps
mask   : (T,) bool, prefix of ones followed by zeros once padded
sofa   : (T,) int64, values in [0, 24]
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SEX_VALUES = ("female", "male", "unknown")
RACE_VALUES = ("black", "white", "other")

# Fixed comorbidity key set; every record carries exactly these 15 flags.
COMORBIDITY_KEYS = (
    "chf",
    "arrhythmia",
    "valvular",
    "pulmonary_circ",
    "pvd",
    "hypertension",
    "copd",
    "diabetes",
    "hypothyroid",
    "renal",
    "mld",
    "sld",
    "cancer",
    "coagulopathy",
    "obesity",
)


@dataclass
class StaticLabels:
    """Static patient attributes attached to one record."""

    sex: str
    age_years: float
    race: str
    comorbidities: dict[str, bool]

    def __post_init__(self):
        if self.sex not in SEX_VALUES:
            raise ValueError(f"sex must be one of {SEX_VALUES}, got {self.sex!r}")
        if self.race not in RACE_VALUES:
            raise ValueError(f"race must be one of {RACE_VALUES}, got {self.race!r}")
        if set(self.comorbidities) != set(COMORBIDITY_KEYS):
            missing = set(COMORBIDITY_KEYS) - set(self.comorbidities)
            extra = set(self.comorbidities) - set(COMORBIDITY_KEYS)
            raise ValueError(
                f"comorbidities must have exactly the configured keys; "
                f"missing={sorted(missing)} extra={sorted(extra)}"
            )


@dataclass
class TimeSeriesRecord:
    """One stay: multivariate hourly series plus labels.

    death_hour is the hour of in-hospital death when it occurred; it may
    exceed T (death after the observed window). None means survived.
    """

    record_id: str
    x: np.ndarray
    statics: StaticLabels
    sofa: np.ndarray
    death_hour: int | None
    dataset_tag: str = "synth"
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.sofa = np.asarray(self.sofa, dtype=np.int64)
        if self.x.ndim != 2:
            raise ValueError(f"x must be (m, T), got shape {self.x.shape}")
        if self.sofa.shape != (self.x.shape[1],):
            raise ValueError(
                f"sofa length {self.sofa.shape} does not match T={self.x.shape[1]}"
            )
        if self.sofa.size and (self.sofa.min() < 0 or self.sofa.max() > 24):
            raise ValueError("sofa values must lie in [0, 24]")
        if self.mask is None:
            self.mask = np.ones(self.x.shape[1], dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != (self.x.shape[1],):
                raise ValueError("mask length must equal T")
            # observed prefix then padding; no interior gaps
            n_on = int(self.mask.sum())
            if not np.array_equal(self.mask, np.arange(self.mask.size) < n_on):
                raise ValueError("mask must be a prefix of ones")
        if self.death_hour is not None:
            self.death_hour = int(self.death_hour)
            if self.death_hour < 1:
                raise ValueError("death_hour must be >= 1")

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def T(self) -> int:
        return self.x.shape[1]


@dataclass
class Batch:
    """Padded minibatch.

    x           : (B, m, t_max)
    mask        : (B, t_max) bool, per-record observed prefix
    targets     : task-dependent block, padded along the last axis when 2-d
    target_mask : same shape as targets when targets are per-step, else None
    lengths     : (B,) int, original per-record T
    """

    x: np.ndarray
    mask: np.ndarray
    targets: np.ndarray
    lengths: np.ndarray
    target_mask: np.ndarray | None = None
    record_ids: list[str] = field(default_factory=list)
    statics: np.ndarray | None = None

    def __len__(self) -> int:
        return self.x.shape[0]
