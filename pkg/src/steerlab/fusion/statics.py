"""Static-attribute feature vectors for fusion models.

Layout (21 dims): [sex female, sex male, age z-score, race black, race white,
race other, 15 comorbidity flags]. Unknown sex leaves both sex slots at 0.
The age z-score uses moments frozen from the training split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.records import COMORBIDITY_KEYS, TimeSeriesRecord

STATIC_DIM = 6 + len(COMORBIDITY_KEYS)


@dataclass
class StaticScaler:
    age_mean: float
    age_std: float

    @classmethod
    def fit(cls, records: list[TimeSeriesRecord]) -> "StaticScaler":
        ages = np.asarray([r.statics.age_years for r in records], dtype=np.float64)
        if ages.size == 0:
            raise ValueError("cannot fit a static scaler on zero records")
        return cls(age_mean=float(ages.mean()), age_std=float(max(ages.std(), 1e-8)))

    def vector(self, record: TimeSeriesRecord) -> np.ndarray:
        s = record.statics
        out = np.zeros(STATIC_DIM)
        if s.sex == "female":
            out[0] = 1.0
        elif s.sex == "male":
            out[1] = 1.0
        out[2] = (s.age_years - self.age_mean) / self.age_std
        out[3 + ("black", "white", "other").index(s.race)] = 1.0
        for i, key in enumerate(COMORBIDITY_KEYS):
            out[6 + i] = 1.0 if s.comorbidities[key] else 0.0
        return out
