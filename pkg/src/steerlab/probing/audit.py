"""Leakage audits: probe static attributes from raw series and hidden states,
in-site and across sites without fine-tuning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, no_grad
from ..data import binarize_statics, make_batches
from ..data.records import TimeSeriesRecord
from ..training.metrics import MetricReport, auc, bootstrap_ci
from .probe import ProbeConfig, ProbeHead, pool_sequence, probe_scores, train_probe


@dataclass
class TrainedProbe:
    head: ProbeHead
    source: str
    attribute: str
    pooling: str


@dataclass
class LeakageReport:
    """Per-attribute leakage AUCs from each representation source."""

    model_desc: str
    train_tag: str
    test_tag: str
    cells: dict[tuple[str, str], MetricReport]
    test_record_ids: list[str]
    age_median: float
    probes: dict[tuple[str, str], TrainedProbe] = field(default_factory=dict, repr=False)

    @property
    def sources(self) -> list[str]:
        return sorted({src for src, _ in self.cells})

    @property
    def attributes(self) -> list[str]:
        seen = []
        for _, attr in self.cells:
            if attr not in seen:
                seen.append(attr)
        return seen

    def to_csv(self) -> str:
        lines = ["source,attribute,auc,ci_low,ci_high,n_boot"]
        for (src, attr), rep in sorted(self.cells.items()):
            lines.append(
                f"{src},{attr},{rep.point:.6f},{rep.ci_low:.6f},"
                f"{rep.ci_high:.6f},{rep.n_boot}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        attrs = self.attributes
        width = max(12, *(len(a) + 2 for a in attrs))
        header = f"{self.model_desc} leakage ({self.train_tag} -> {self.test_tag})"
        lines = [header, "-" * len(header)]
        lines.append("source".ljust(10) + "".join(a.rjust(width) for a in attrs))
        for src in self.sources:
            row = src.ljust(10)
            for attr in attrs:
                rep = self.cells.get((src, attr))
                row += (f"{rep.point:.3f}" if rep else "-").rjust(width)
            lines.append(row)
        return "\n".join(lines) + "\n"


def extract_hidden(
    model, records: list[TimeSeriesRecord], pooling: str = "masked-mean",
    batch_size: int = 64,
) -> np.ndarray:
    """Pooled frozen representations (N, d), in record order.

    Read-only: model parameters are untouched and no gradients are recorded.
    """
    if records and records[0].m != model.cfg.in_channels:
        raise ValueError(
            f"channel schema mismatch: records have m={records[0].m}, "
            f"model expects {model.cfg.in_channels}"
        )
    model.eval()
    out = []
    with no_grad():
        for batch in make_batches(records, batch_size):
            h = model.hidden(Tensor(batch.x), batch.mask)
            out.append(pool_sequence(h.data, batch.mask, pooling))
    return np.concatenate(out, axis=0)


def raw_features(
    records: list[TimeSeriesRecord], pooling: str = "masked-mean",
) -> np.ndarray:
    """Pooled raw channels (N, m): the no-model leakage control."""
    out = []
    for batch in make_batches(records, 256):
        x = np.transpose(batch.x, (0, 2, 1))  # (B, T, m)
        out.append(pool_sequence(x, batch.mask, pooling))
    return np.concatenate(out, axis=0)


def _source_reps(model, records, source, pooling):
    if source == "raw":
        return raw_features(records, pooling)
    return extract_hidden(model, records, pooling)


def leakage_audit(
    model,
    parts: dict[str, list[TimeSeriesRecord]],
    attributes: list[str],
    sources: tuple[str, ...] = ("raw", "hidden"),
    pooling: str = "masked-mean",
    n_boot: int = 1000,
    seed: int = 0,
    probe_epochs: int = 50,
) -> LeakageReport:
    """Train one probe per (source, attribute) on the train split; report AUC
    with bootstrap CIs on the task model's own test split."""
    train_recs, test_recs = parts["train"], parts["test"]
    train_table = binarize_statics(train_recs)
    test_table = binarize_statics(test_recs, age_median=train_table.age_median)
    for attr in attributes:
        if attr not in train_table.labels:
            raise KeyError(f"attribute {attr!r} missing from the label table")

    cells: dict[tuple[str, str], MetricReport] = {}
    probes: dict[tuple[str, str], TrainedProbe] = {}
    for source in sources:
        reps_train = _source_reps(model, train_recs, source, pooling)
        reps_test = _source_reps(model, test_recs, source, pooling)
        for attr in attributes:
            keep_tr, y_tr = train_table.pair(attr)
            keep_te, y_te = test_table.pair(attr)
            cfg = ProbeConfig(
                source=source, pooling=pooling, attribute=attr,
                epochs=probe_epochs, seed=seed,
            )
            probe = train_probe(reps_train[keep_tr], y_tr, cfg)
            scores = probe_scores(probe, reps_test[keep_te])
            cells[(source, attr)] = bootstrap_ci(
                auc, (scores, y_te), n_boot=n_boot, seed=seed,
                metric_name=f"auc[{source}/{attr}]",
            )
            probes[(source, attr)] = TrainedProbe(probe, source, attr, pooling)

    tag = test_recs[0].dataset_tag if test_recs else "unknown"
    return LeakageReport(
        model_desc=model.cfg.kind,
        train_tag=tag,
        test_tag=tag,
        cells=cells,
        test_record_ids=[r.record_id for r in test_recs],
        age_median=train_table.age_median,
        probes=probes,
    )


def cross_dataset_eval(
    model,
    probes: dict[tuple[str, str], TrainedProbe],
    foreign_records: list[TimeSeriesRecord],
    age_median: float,
    train_tag: str = "home",
    n_boot: int = 1000,
    seed: int = 0,
) -> LeakageReport:
    """Evaluate already-trained probes on a foreign dataset with zero updates.

    The foreign statics are binarized against the home training-split age
    median so the age task means the same thing at both sites.
    """
    if foreign_records and foreign_records[0].m != model.cfg.in_channels:
        raise ValueError(
            f"channel schema mismatch: foreign records have "
            f"m={foreign_records[0].m}, model expects {model.cfg.in_channels}"
        )
    table = binarize_statics(foreign_records, age_median=age_median)
    cells: dict[tuple[str, str], MetricReport] = {}
    rep_cache: dict[tuple[str, str], np.ndarray] = {}
    for (source, attr), tp in sorted(probes.items()):
        cache_key = (source, tp.pooling)
        if cache_key not in rep_cache:
            rep_cache[cache_key] = _source_reps(
                model, foreign_records, source, tp.pooling
            )
        keep, y = table.pair(attr)
        scores = probe_scores(tp.head, rep_cache[cache_key][keep])
        cells[(source, attr)] = bootstrap_ci(
            auc, (scores, y), n_boot=n_boot, seed=seed,
            metric_name=f"auc[{source}/{attr}]",
        )
    tag = foreign_records[0].dataset_tag if foreign_records else "unknown"
    return LeakageReport(
        model_desc=model.cfg.kind,
        train_tag=train_tag,
        test_tag=tag,
        cells=cells,
        test_record_ids=[r.record_id for r in foreign_records],
        age_median=age_median,
        probes=dict(probes),
    )
