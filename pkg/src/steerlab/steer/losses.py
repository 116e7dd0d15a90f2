"""Loss terms for the partitioned-latent VAE.

Four terms combine into a single minimization objective:

    total = -beta * s * (recon - kl) - alpha * predictiveness
            + gamma * tc + theta * l_ctp

with s = 1/T when the ELBO is scaled by sequence length. recon and
predictiveness are log-likelihoods (higher is better), kl and tc and l_ctp
are penalties (lower is better); the signs above turn the whole thing into
something an ordinary minimizer can chew on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor
from ..autodiff.tensor import concat, exp, log_softmax, take
from .hyperparams import SteerHyperparams
from .vae import LatentPartition


@dataclass
class LossBreakdown:
    """Scalar values of every objective term for one batch (or one record).

    `scale` records the s applied to the ELBO pair inside `total`, so the
    recombination total = -beta*scale*(recon-kl) - alpha*predictiveness
    + gamma*tc + theta*l_ctp holds exactly.
    """

    recon: float
    kl: float
    predictiveness: float
    tc: float
    l_ctp: float
    total: float
    scale: float = 1.0

    def recombined(self, h: SteerHyperparams) -> float:
        return (
            -h.beta * self.scale * (self.recon - self.kl)
            - h.alpha * self.predictiveness
            + h.gamma * self.tc
            + h.theta * self.l_ctp
        )

    def to_dict(self) -> dict:
        return {
            "recon": self.recon,
            "kl": self.kl,
            "predictiveness": self.predictiveness,
            "tc": self.tc,
            "l_ctp": self.l_ctp,
            "total": self.total,
            "scale": self.scale,
        }


def _value(x) -> float:
    return float(x.data) if isinstance(x, Tensor) else float(x)


def kl_standard_normal(mu: Tensor, logvar: Tensor) -> Tensor:
    """Elementwise KL(N(mu, exp(logvar)) || N(0, 1)); >= 0, zero iff (0, 0)."""
    return (mu * mu + exp(logvar) - logvar - 1.0) * 0.5


def elbo_terms(x: Tensor, x_hat: Tensor, partition: LatentPartition,
               mask: np.ndarray, scale_by_T: bool = False) -> tuple[Tensor, Tensor]:
    """Batch-mean reconstruction log-likelihood and KL.

    recon = mean over records of -1/2 sum over unmasked (t, channel) of
    (x - x_hat)^2, the unit-variance Gaussian log-likelihood with its
    constant dropped. kl sums the closed-form diagonal KL over both latent
    subspaces and (in per-timestep mode) over unmasked steps. With
    `scale_by_T` each record's pair is divided by its own unmasked length,
    which makes both terms invariant to trailing padding.
    """
    w = np.asarray(mask, dtype=np.float64)
    t_len = np.maximum(w.sum(axis=1), 1.0)  # (B,)

    diff = x - x_hat
    recon_rec = (diff * diff * Tensor(w[:, None, :])).sum(axis=(1, 2)) * (-0.5)

    kl_elem = kl_standard_normal(partition.z_mu, partition.z_logvar).sum(axis=-1)
    kl_elem = kl_elem + kl_standard_normal(partition.b_mu, partition.b_logvar).sum(axis=-1)
    if partition.latent_mode == "per-timestep":
        kl_rec = (kl_elem * Tensor(w)).sum(axis=1)  # (B,)
    else:
        kl_rec = kl_elem  # (B,)

    if scale_by_T:
        inv = Tensor(1.0 / t_len)
        recon_rec = recon_rec * inv
        kl_rec = kl_rec * inv
    return recon_rec.mean(), kl_rec.mean()


def predictiveness_loss(attr_logits: list[Tensor], labels: np.ndarray) -> Tensor:
    """Sum over attributes of the mean log-probability of the true class.

    `labels` is (B, n_attributes) with entries in {0, 1} or -1 for missing;
    missing rows are skipped per attribute, and an attribute with no labeled
    rows contributes 0. The value is <= 0 and enters the objective with a
    -alpha weight (it is maximized).
    """
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[:, None]
    if len(attr_logits) != labels.shape[1]:
        raise ValueError(
            f"{len(attr_logits)} attribute heads vs {labels.shape[1]} label columns"
        )
    total = Tensor(0.0)
    for j, logits in enumerate(attr_logits):
        col = labels[:, j].astype(int)
        rows = np.flatnonzero(col >= 0)
        if rows.size == 0:
            continue
        logp = log_softmax(logits, axis=-1)
        picked = take(logp, (rows, col[rows]))
        total = total + picked.mean()
    return total


def _logit_margin(disc, rows: Tensor) -> Tensor:
    """log q(joint)/q(product) estimate per row: logit_0 - logit_1."""
    logits = disc(rows)
    return logits[:, 0] - logits[:, 1]


def latent_rows(partition: LatentPartition, mask: np.ndarray) -> Tensor:
    """Flatten a batch into (N, nz + S) latent rows.

    Per-timestep mode yields one row per unmasked (record, step) pair;
    pooled mode yields one row per record. Gradients flow back to the
    posterior parameters.
    """
    if partition.latent_mode == "pooled":
        return concat([partition.z_sample, partition.b_sample], axis=1)
    joint = concat([partition.z_sample, partition.b_sample], axis=2)
    b_sz, t_len, d = joint.shape
    flat = joint.reshape(b_sz * t_len, d)
    keep = np.flatnonzero(np.asarray(mask, dtype=bool).ravel())
    return take(flat, keep)


def permuted_rows(rows: np.ndarray, nz: int, rng: np.random.Generator) -> np.ndarray:
    """Product-of-marginals surrogate: permute each sensitive channel
    independently across rows, holding z fixed. Input and output are plain
    arrays (the fake batch never carries gradients)."""
    rows = np.array(rows, dtype=np.float64)
    n = rows.shape[0]
    if n < 2:
        raise ValueError("total-correlation permutation needs at least 2 rows")
    for j in range(nz, rows.shape[1]):
        rows[:, j] = rows[rng.permutation(n), j]
    return rows


def discriminator_loss(disc, real_rows: np.ndarray, fake_rows: np.ndarray) -> Tensor:
    """Binary cross-entropy: class 0 = joint rows, class 1 = permuted rows.

    Both inputs are detached arrays; only the discriminator gets gradients.
    """
    lp_real = log_softmax(disc(Tensor(real_rows)), axis=-1)
    lp_fake = log_softmax(disc(Tensor(fake_rows)), axis=-1)
    return -(lp_real[:, 0].mean() + lp_fake[:, 1].mean())


def tc_estimate(disc, live_rows: Tensor, fake_rows: np.ndarray) -> Tensor:
    """Density-ratio total-correlation estimate.

    Mean logit margin on the live joint rows minus the same margin on the
    permuted baseline. The baseline centers the estimate, so a constant
    discriminator or an identity permutation gives exactly 0; gradients
    reach the encoder only through the live rows.
    """
    real_term = _logit_margin(disc, live_rows).mean()
    fake_term = _logit_margin(disc, Tensor(fake_rows)).mean()
    return real_term - fake_term


def tc_adversary(disc, partition: LatentPartition, mask: np.ndarray,
                 rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    """One-shot (tc_estimate, discriminator_loss) for a batch.

    Training interleaves the two pieces around the adversary's update; this
    wrapper computes both against the current discriminator for analysis.
    """
    live = latent_rows(partition, mask)
    fake = permuted_rows(live.data, partition.nz, rng)
    return tc_estimate(disc, live, fake), discriminator_loss(disc, live.data, fake)


def clinical_head_loss(preds: Tensor, targets: np.ndarray, mask: np.ndarray,
                       task: str) -> Tensor:
    """Masked MSE (forecasting) or cross-entropy (mortality) from z-only preds.

    Forecasting: preds (B, T, 1) against per-step targets (B, T), averaged
    over unmasked steps. Mortality: per-record logits (B, 2) read at the last
    unmasked step when preds are per-step, cross-entropy against (B,) labels.
    """
    w = np.asarray(mask, dtype=np.float64)
    if task == "sofa":
        tgt = np.asarray(targets, dtype=np.float64)
        diff = preds.reshape(preds.shape[0], preds.shape[1]) - Tensor(tgt)
        denom = max(w.sum(), 1.0)
        return (diff * diff * Tensor(w)).sum() * (1.0 / denom)
    if task == "ihm":
        labels = np.asarray(targets).astype(int).ravel()
        if preds.ndim == 3:
            last = np.maximum(w.sum(axis=1).astype(int) - 1, 0)
            rows = take(preds.reshape(-1, preds.shape[2]),
                        last + np.arange(preds.shape[0]) * preds.shape[1])
        else:
            rows = preds
        logp = log_softmax(rows, axis=-1)
        return -take(logp, (np.arange(labels.size), labels)).mean()
    raise ValueError(f"unknown task {task!r}")


def steer_loss(recon, kl, predictiveness, tc, l_ctp, h: SteerHyperparams,
               t_len: int | None = None):
    """Combine the terms into the minimization objective.

    Inputs may be floats or scalar tensors; the return's first element
    matches (a live tensor whenever any input carries gradients). Pass
    `t_len` only when recon/kl are raw per-record sums that still need the
    1/T scaling; batch losses from `elbo_terms(..., scale_by_T=True)` are
    already scaled, so training passes t_len=None.
    """
    s = 1.0 / float(t_len) if (h.scale_elbo_by_T and t_len is not None) else 1.0
    total = (
        (recon - kl) * (-h.beta * s)
        + predictiveness * (-h.alpha)
        + tc * h.gamma
        + l_ctp * h.theta
    )
    breakdown = LossBreakdown(
        recon=_value(recon),
        kl=_value(kl),
        predictiveness=_value(predictiveness),
        tc=_value(tc),
        l_ctp=_value(l_ctp),
        total=_value(total),
        scale=s,
    )
    return total, breakdown
