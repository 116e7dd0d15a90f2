"""Evaluation metrics: AUC, masked RMSE, bootstrap CIs, confusion matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricReport:
    metric_name: str
    point: float
    ci_low: float
    ci_high: float
    n_boot: int
    seed: int = 0
    confusion: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if not self.ci_low <= self.point <= self.ci_high:
            raise ValueError(
                f"CI must bracket the point estimate: "
                f"[{self.ci_low}, {self.ci_high}] vs {self.point}"
            )

    def to_text(self) -> str:
        line = (
            f"{self.metric_name} {self.point:.6f} "
            f"ci [{self.ci_low:.6f}, {self.ci_high:.6f}] "
            f"n_boot {self.n_boot} seed {self.seed}"
        )
        if self.confusion is not None:
            flat = " ".join(str(int(v)) for v in self.confusion.ravel())
            line += f" confusion {flat}"
        return line

    def to_dict(self) -> dict:
        out = {
            "metric_name": self.metric_name,
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_boot": self.n_boot,
            "seed": self.seed,
        }
        if self.confusion is not None:
            out["confusion"] = self.confusion.tolist()
        return out


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(random positive outranks random negative), ties 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be aligned 1-d vectors")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc undefined: both classes must be present")
    # average ranks (1-based) with tie groups sharing their mean rank
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def masked_rmse(preds, targets, mask) -> float:
    """Root mean squared error over unmasked entries only."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if preds.shape != targets.shape or preds.shape != mask.shape:
        raise ValueError("preds, targets, and mask must share a shape")
    n = int(mask.sum())
    if n == 0:
        raise ValueError("masked_rmse undefined with zero unmasked entries")
    diff = (preds - targets)[mask]
    return float(np.sqrt(np.mean(diff * diff)))


def confusion_matrix(preds, labels, threshold: float = 0.5) -> np.ndarray:
    """2x2 counts; rows = true class (0, 1), columns = predicted class."""
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    hard = (preds >= threshold).astype(np.int64)
    out = np.zeros((2, 2), dtype=np.int64)
    for t, p in zip(labels, hard):
        out[t, p] += 1
    return out


def bootstrap_ci(
    metric_fn,
    data: tuple[np.ndarray, ...],
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    metric_name: str = "metric",
) -> MetricReport:
    """Percentile bootstrap over record-level resampling.

    `data` is a tuple of aligned arrays (first axis = records); metric_fn is
    called as metric_fn(*arrays). Resamples on which the metric is undefined
    (raises ValueError) are skipped; more than 50% undefined is an error.
    The reported interval is widened, if needed, to bracket the point
    estimate so the report invariant holds on extremely skewed resamples.
    """
    arrays = tuple(np.asarray(a) for a in data)
    n = arrays[0].shape[0]
    if n == 0:
        raise ValueError("bootstrap_ci requires non-empty data")
    for a in arrays:
        if a.shape[0] != n:
            raise ValueError("all data arrays must share the record axis")
    point = float(metric_fn(*arrays))
    rng = np.random.default_rng([seed, 0xB001])
    values = []
    failed = 0
    for _ in range(n_boot):
        idx = rng.integers(0, n, size=n)
        try:
            values.append(float(metric_fn(*(a[idx] for a in arrays))))
        except ValueError:
            failed += 1
    if failed > n_boot // 2:
        raise ValueError(
            f"metric undefined on {failed}/{n_boot} resamples; bootstrap aborted"
        )
    lo_q = 100.0 * (1.0 - level) / 2.0
    values = np.sort(np.asarray(values))
    ci_low = float(np.percentile(values, lo_q))
    ci_high = float(np.percentile(values, 100.0 - lo_q))
    return MetricReport(
        metric_name=metric_name,
        point=point,
        ci_low=min(ci_low, point),
        ci_high=max(ci_high, point),
        n_boot=n_boot,
        seed=seed,
    )
