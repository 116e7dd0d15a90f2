"""Disentanglement-vs-utility evaluation of a trained partitioned VAE.

Post-hoc probes (the same fixed heads used for leakage audits) are trained
on each latent subspace separately; utility comes from the clinical head
reading z. Sensitive content should concentrate in b: high probe AUC from b,
chance-level AUC from z, task metric intact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, no_grad
from ..data import make_batches, make_sofa_targets
from ..data.records import TimeSeriesRecord
from ..data.tasks import SOFA_HORIZON_H
from ..autodiff.tensor import softmax
from ..probing.probe import ProbeConfig, probe_scores, train_probe
from ..training.metrics import MetricReport, auc, bootstrap_ci, masked_rmse
from .training import sensitive_label_table
from .vae import LatentPartition, SteerVAE

SANITIZE_MODES = ("discard", "noise")


def latent_features(model: SteerVAE, records: list[TimeSeriesRecord],
                    batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Pooled posterior means: (z (N, nz), b (N, S)), in record order.

    Per-timestep posteriors are masked-mean pooled over each record's
    observed steps; pooled-mode posteriors pass through. Deterministic (the
    reparameterization noise is fixed to zero).
    """
    model.eval()
    zs, bs = [], []
    with no_grad():
        for batch in make_batches(records, batch_size):
            part = model.encode(Tensor(batch.x), batch.mask)
            if model.h.latent_mode == "per-timestep":
                w = batch.mask.astype(np.float64)
                denom = np.maximum(w.sum(axis=1, keepdims=True), 1.0)
                zs.append((part.z_mu.data * w[:, :, None]).sum(axis=1) / denom)
                bs.append((part.b_mu.data * w[:, :, None]).sum(axis=1) / denom)
            else:
                zs.append(part.z_mu.data)
                bs.append(part.b_mu.data)
    return np.concatenate(zs, axis=0), np.concatenate(bs, axis=0)


def noise_out_sensitive(partition: LatentPartition, mode: str,
                        rng: np.random.Generator | None = None) -> LatentPartition:
    """Replace the sensitive subspace for downstream use; z is untouched.

    "discard" zeroes b; "noise" substitutes standard-normal draws. Both the
    posterior mean and the sample are replaced, so pooled features built
    from either are sanitized. Clinical-head outputs are invariant to the
    mode because the head never reads b.
    """
    if mode not in SANITIZE_MODES:
        raise ValueError(f"mode must be one of {SANITIZE_MODES}, got {mode!r}")
    shape = partition.b_mu.shape
    if mode == "discard":
        b_new = np.zeros(shape)
    else:
        if rng is None:
            raise ValueError("noise mode needs an rng")
        b_new = rng.standard_normal(shape)
    return LatentPartition(
        z_mu=partition.z_mu,
        z_logvar=partition.z_logvar,
        b_mu=Tensor(b_new),
        b_logvar=partition.b_logvar,
        z_sample=partition.z_sample,
        b_sample=Tensor(b_new.copy()),
        latent_mode=partition.latent_mode,
    )


def sanitized_b_features(model: SteerVAE, records: list[TimeSeriesRecord],
                         mode: str, seed: int = 0,
                         batch_size: int = 64) -> np.ndarray:
    """Pooled b features after :func:`noise_out_sensitive` (probe fodder)."""
    rng = np.random.default_rng([seed, 0x5A71])
    model.eval()
    out = []
    with no_grad():
        for batch in make_batches(records, batch_size):
            part = noise_out_sensitive(
                model.encode(Tensor(batch.x), batch.mask), mode, rng
            )
            if model.h.latent_mode == "per-timestep":
                w = batch.mask.astype(np.float64)
                denom = np.maximum(w.sum(axis=1, keepdims=True), 1.0)
                out.append((part.b_mu.data * w[:, :, None]).sum(axis=1) / denom)
            else:
                out.append(part.b_mu.data)
    return np.concatenate(out, axis=0)


def steer_predict_sofa(model: SteerVAE, records: list[TimeSeriesRecord],
                       horizon_h: int = SOFA_HORIZON_H, batch_size: int = 64):
    """Padded (preds, targets, mask) from the z-only clinical head."""
    usable = [r for r in records if r.T > horizon_h]
    if not usable:
        raise ValueError("no records long enough for the forecasting task")
    l_max = max(r.T for r in usable) - horizon_h
    n = len(usable)
    preds = np.zeros((n, l_max))
    targets = np.zeros((n, l_max))
    mask = np.zeros((n, l_max), dtype=bool)
    model.eval()
    row = 0
    with no_grad():
        for batch in make_batches(usable, batch_size,
                                  targets_fn=lambda r: make_sofa_targets(r, horizon_h)):
            part = model.encode(Tensor(batch.x), batch.mask)
            block = model.clinical_outputs(part.z_sample).data[:, :, 0]
            l_batch = batch.targets.shape[1]
            for j in range(len(batch)):
                preds[row, :l_batch] = block[j, :l_batch]
                targets[row, :l_batch] = batch.targets[j]
                mask[row, :l_batch] = batch.target_mask[j]
                row += 1
    return preds, targets, mask


def steer_predict_ihm(model: SteerVAE, records: list[TimeSeriesRecord],
                      batch_size: int = 64):
    """(positive-class probabilities, labels) from the z-only clinical head."""
    model.eval()
    probs, labels = [], []
    with no_grad():
        for batch in make_batches(
            records, batch_size,
            targets_fn=lambda r: 1.0 if r.death_hour is not None else 0.0,
        ):
            part = model.encode(Tensor(batch.x), batch.mask)
            logits = model.clinical_outputs(part.z_sample)
            if logits.ndim == 3:
                last = batch.mask.sum(axis=1).astype(int) - 1
                rows = logits.data[np.arange(len(batch)), last]
            else:
                rows = logits.data
            probs.append(softmax(Tensor(rows), axis=-1).data[:, 1])
            labels.append(batch.targets)
    return np.concatenate(probs), np.concatenate(labels).astype(np.int64)


@dataclass
class SteerEvalReport:
    """Probe AUCs per attribute from each subspace, plus the task metric."""

    task: str
    utility: MetricReport
    auc_from_b: dict[str, MetricReport]
    auc_from_z: dict[str, MetricReport]
    age_median: float
    n_train: int
    n_test: int

    def to_csv(self) -> str:
        lines = ["measure,attribute,value,ci_low,ci_high,n_boot"]
        lines.append(
            f"utility_{self.utility.metric_name},-,{self.utility.point:.6f},"
            f"{self.utility.ci_low:.6f},{self.utility.ci_high:.6f},"
            f"{self.utility.n_boot}"
        )
        for name, cells in (("auc_from_b", self.auc_from_b),
                            ("auc_from_z", self.auc_from_z)):
            for attr, rep in sorted(cells.items()):
                lines.append(
                    f"{name},{attr},{rep.point:.6f},{rep.ci_low:.6f},"
                    f"{rep.ci_high:.6f},{rep.n_boot}"
                )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        head = f"disentanglement eval ({self.task}, n_test={self.n_test})"
        lines = [head, "-" * len(head)]
        lines.append(
            f"utility {self.utility.metric_name}: {self.utility.point:.4f} "
            f"[{self.utility.ci_low:.4f}, {self.utility.ci_high:.4f}]"
        )
        for attr in sorted(self.auc_from_b):
            b_rep = self.auc_from_b[attr]
            z_rep = self.auc_from_z[attr]
            lines.append(
                f"{attr:>6}: AUC(b) = {b_rep.point:.4f}  AUC(z) = {z_rep.point:.4f}"
            )
        return "\n".join(lines) + "\n"


def disentanglement_eval(
    model: SteerVAE,
    parts: dict[str, list[TimeSeriesRecord]],
    seed: int = 0,
    n_boot: int = 1000,
    horizon_h: int = SOFA_HORIZON_H,
    probe_epochs: int = 50,
) -> SteerEvalReport:
    """Fresh probes on b and z (fit on train, scored on test) plus utility.

    The age median for the age-class labels is frozen on the training split.
    Attributes without both classes in either split are skipped.
    """
    attrs = model.h.attributes
    train_recs = parts["train"]
    test_recs = parts["test"]
    z_tr, b_tr = latent_features(model, train_recs)
    z_te, b_te = latent_features(model, test_recs)
    lab_tr, age_median = sensitive_label_table(train_recs, attrs)
    lab_te, _ = sensitive_label_table(test_recs, attrs, age_median=age_median)

    auc_from_b: dict[str, MetricReport] = {}
    auc_from_z: dict[str, MetricReport] = {}
    for j, attr in enumerate(attrs):
        tr_ok = lab_tr[:, j] >= 0
        te_ok = lab_te[:, j] >= 0
        tr_lab = lab_tr[tr_ok, j].astype(np.int64)
        te_lab = lab_te[te_ok, j].astype(np.int64)
        if np.unique(tr_lab).size < 2 or np.unique(te_lab).size < 2:
            continue
        for name, feats_tr, feats_te in (
            ("b", b_tr[tr_ok], b_te[te_ok]),
            ("z", z_tr[tr_ok], z_te[te_ok]),
        ):
            cfg = ProbeConfig(source="hidden", attribute=attr,
                              epochs=probe_epochs, seed=seed + 31 * j)
            probe = train_probe(feats_tr, tr_lab, cfg)
            scores = probe_scores(probe, feats_te)
            rep = bootstrap_ci(auc, (scores, te_lab), n_boot=n_boot,
                               seed=seed, metric_name="auc")
            if name == "b":
                auc_from_b[attr] = rep
            else:
                auc_from_z[attr] = rep

    if model.task == "sofa":
        preds, targets, mask = steer_predict_sofa(model, test_recs, horizon_h)
        utility = bootstrap_ci(masked_rmse, (preds, targets, mask),
                               n_boot=n_boot, seed=seed, metric_name="rmse")
    else:
        probs, labels = steer_predict_ihm(model, test_recs)
        utility = bootstrap_ci(auc, (probs, labels), n_boot=n_boot,
                               seed=seed, metric_name="auc")
    return SteerEvalReport(
        task=model.task,
        utility=utility,
        auc_from_b=auc_from_b,
        auc_from_z=auc_from_z,
        age_median=age_median,
        n_train=len(train_recs),
        n_test=len(test_recs),
    )
