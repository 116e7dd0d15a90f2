"""One-stage adversarial training for the partitioned-latent VAE.

Each minibatch runs two updates: the total-correlation discriminator takes a
cross-entropy step on detached latent rows (joint vs channel-permuted), then
the main parameters take a step on the full objective with the freshly
updated discriminator held fixed. There is no separate task-head phase; the
clinical term rides along from the start, weighted by theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor
from ..autodiff.optim import build_optimizer
from ..data import binarize_statics, make_batches, make_sofa_targets
from ..data.records import TimeSeriesRecord
from ..data.tasks import SOFA_HORIZON_H
from ..seqmodels.config import EncoderConfig
from ..training.loop import TrainConfig, _epoch_seed
from .hyperparams import SteerHyperparams
from .losses import (
    LossBreakdown,
    clinical_head_loss,
    discriminator_loss,
    elbo_terms,
    latent_rows,
    permuted_rows,
    predictiveness_loss,
    steer_loss,
    tc_estimate,
)
from .vae import SteerVAE

_MODEL_SALT = 0x57EE
_DROP_SALT = 0xD120
_EPS_SALT = 0xE9D0
_PERM_SALT = 0x9E2B

# sensitive-attribute name -> column in the binary static-label table
_ATTR_LABEL_KEY = {"sex": "sex", "age": "age_class", "race": "race"}

_HISTORY_COLUMNS = (
    "epoch", "recon", "kl", "predictiveness", "tc", "l_ctp", "total", "disc_loss",
)


class SteerDivergedError(RuntimeError):
    """Raised when any objective term goes non-finite; carries the trace."""

    def __init__(self, message: str, breakdown: LossBreakdown | None,
                 history: "SteerHistory"):
        super().__init__(message)
        self.breakdown = breakdown
        self.history = history


@dataclass
class SteerHistory:
    """Per-epoch means of every objective term plus the adversary's loss."""

    rows: list[dict] = field(default_factory=list)

    def append(self, epoch: int, breakdowns: list[LossBreakdown],
               disc_losses: list[float], weights: list[int]) -> None:
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum()
        row = {"epoch": epoch}
        for key in ("recon", "kl", "predictiveness", "tc", "l_ctp", "total"):
            row[key] = float(np.dot(w, [getattr(b, key) for b in breakdowns]))
        row["disc_loss"] = float(np.dot(w, disc_losses))
        self.rows.append(row)

    def series(self, key: str) -> list[float]:
        return [row[key] for row in self.rows]

    def to_csv(self) -> str:
        lines = [",".join(_HISTORY_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(
                str(row["epoch"]) if c == "epoch" else f"{row[c]:.8g}"
                for c in _HISTORY_COLUMNS
            ))
        return "\n".join(lines) + "\n"


def sensitive_label_table(records: list[TimeSeriesRecord],
                          attributes: tuple[str, ...],
                          age_median: float | None = None):
    """(labels (N, S) with -1 for missing, age_median actually used)."""
    table = binarize_statics(records, age_median=age_median)
    cols = [table.labels[_ATTR_LABEL_KEY[a]] for a in attributes]
    return np.stack(cols, axis=1).astype(np.float64), table.age_median


def _usable(records: list[TimeSeriesRecord], task: str, horizon_h: int):
    if task == "sofa":
        return [r for r in records if r.T > horizon_h]
    return list(records)


def _targets_fn(task: str, horizon_h: int):
    if task == "ihm":
        return lambda r: 1.0 if r.death_hour is not None else 0.0
    return lambda r: make_sofa_targets(r, horizon_h)


def _clinical_term(model: SteerVAE, z_sample: Tensor, batch, task: str) -> Tensor:
    if task == "sofa":
        preds = model.clinical_outputs(z_sample)
        l_max = batch.targets.shape[1]
        return clinical_head_loss(
            preds[:, :l_max, :], batch.targets, batch.target_mask, task
        )
    preds = model.clinical_outputs(z_sample)
    return clinical_head_loss(preds, batch.targets, batch.mask, task)


def train_steer(
    records: list[TimeSeriesRecord],
    enc_cfg: EncoderConfig,
    h: SteerHyperparams,
    cfg: TrainConfig,
    task: str = "sofa",
    horizon_h: int = SOFA_HORIZON_H,
    age_median: float | None = None,
) -> tuple[SteerVAE, SteerHistory]:
    """Fit a SteerVAE on `records`; returns (model, per-epoch history).

    Runs exactly cfg.epochs epochs (no early stopping, so hyperparameter
    sweeps see identical schedules). The discriminator's parameters live
    under the model's `disc` attribute and get their own optimizer; the main
    optimizer covers everything else. Identical (cfg, h, records) reproduce
    identical final parameters. Raises SteerDivergedError when any term goes
    non-finite, carrying the offending LossBreakdown and the history so far.
    """
    recs = _usable(records, task, horizon_h)
    if len(recs) < 2:
        raise ValueError("training needs at least 2 usable records")
    if h.latent_mode == "pooled" and len(recs) % cfg.batch_size == 1:
        raise ValueError(
            "pooled mode with a trailing single-record batch cannot build "
            "permuted rows; adjust batch_size or drop one record"
        )
    labels, _ = sensitive_label_table(recs, h.attributes, age_median)
    by_id = {r.record_id: labels[i] for i, r in enumerate(recs)}

    model = SteerVAE(enc_cfg, h, task, np.random.default_rng([cfg.seed, _MODEL_SALT]))
    disc_params = [p for n, p in model.named_parameters() if n.startswith("disc.")]
    main_params = [p for n, p in model.named_parameters() if not n.startswith("disc.")]
    main_opt = build_optimizer(cfg.optimizer_name, main_params, cfg.lr)
    disc_opt = build_optimizer(cfg.optimizer_name, disc_params, cfg.lr)

    drop_rng = np.random.default_rng([cfg.seed, _DROP_SALT])
    eps_rng = np.random.default_rng([cfg.seed, _EPS_SALT])
    perm_rng = np.random.default_rng([cfg.seed, _PERM_SALT])
    targets_fn = _targets_fn(task, horizon_h)
    history = SteerHistory()

    for epoch in range(cfg.epochs):
        model.train()
        breakdowns: list[LossBreakdown] = []
        disc_losses: list[float] = []
        weights: list[int] = []
        for batch in make_batches(
            recs, cfg.batch_size,
            shuffle_seed=_epoch_seed(cfg.seed, epoch),
            targets_fn=targets_fn,
            statics_fn=lambda r: by_id[r.record_id],
        ):
            part = model.encode(Tensor(batch.x), batch.mask,
                                rng=drop_rng, sample_rng=eps_rng)
            live = latent_rows(part, batch.mask)
            fake = permuted_rows(live.data, h.nz, perm_rng)

            # adversary step on detached rows; its graph never touches the encoder
            disc_opt.zero_grad()
            d_loss = discriminator_loss(model.disc, live.data, fake)
            d_val = float(d_loss.data)
            d_loss.backward()
            disc_opt.step()

            # main step against the just-updated, now-frozen adversary
            tc = tc_estimate(model.disc, live, fake)
            x_hat = model.decode(part.z_sample, part.b_sample,
                                 t_len=batch.x.shape[2], rng=drop_rng)
            recon, kl = elbo_terms(Tensor(batch.x), x_hat, part, batch.mask,
                                   scale_by_T=h.scale_elbo_by_T)
            pred = predictiveness_loss(
                model.attr_logits(model.pooled_b(part, batch.mask)), batch.statics
            )
            l_ctp = _clinical_term(model, part.z_sample, batch, task)
            total, breakdown = steer_loss(recon, kl, pred, tc, l_ctp, h)

            if not all(np.isfinite(v) for v in
                       (*breakdown.to_dict().values(), d_val)):
                raise SteerDivergedError(
                    f"non-finite objective at epoch {epoch}", breakdown, history
                )
            main_opt.zero_grad()
            total.backward()
            main_opt.step()
            # tc's backward also left gradients on the adversary; the next
            # disc_opt.zero_grad() discards them before they can be applied
            breakdowns.append(breakdown)
            disc_losses.append(d_val)
            weights.append(len(batch))
        history.append(epoch, breakdowns, disc_losses, weights)

    model.eval()
    return model, history
