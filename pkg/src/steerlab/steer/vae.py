"""Partitioned-latent variational autoencoder over clinical time series.

The latent space splits into a non-sensitive subspace z (clinical content)
and a sensitive subspace b (static-attribute content). A causal TCN backbone
feeds four affine posterior heads (mu/logvar for each subspace); a mirrored
causal stack decodes (z, b) back to the input channels. The clinical task
head reads z exclusively, so its outputs carry no gradient path to b. Small
per-attribute classifiers read a pooled view of b (the predictiveness term),
and a feedforward discriminator estimates the total correlation between z
and b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, nn
from ..autodiff.tensor import clip, concat, exp, leaky_relu, relu
from ..seqmodels.config import EncoderConfig
from ..seqmodels.encoders import CausalConv1d, TCNEncoder, TemporalBlock
from ..seqmodels.heads import TASK_OUT_DIM, TASKS
from .hyperparams import SteerHyperparams

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0

_DISC_WIDTH = 128
_CLINICAL_HIDDEN = 32
_ATTR_HIDDEN = 32


@dataclass
class LatentPartition:
    """Posterior parameters and reparameterized samples for one batch.

    Per-timestep mode: arrays are (B, T, nz) and (B, T, S). Pooled mode:
    (B, nz) and (B, S). Samples equal the means when drawn with eps = 0.
    """

    z_mu: Tensor
    z_logvar: Tensor
    b_mu: Tensor
    b_logvar: Tensor
    z_sample: Tensor
    b_sample: Tensor
    latent_mode: str

    @property
    def nz(self) -> int:
        return self.z_mu.shape[-1]

    @property
    def sensitive_dim(self) -> int:
        return self.b_mu.shape[-1]


def reparameterize(mu: Tensor, logvar: Tensor, rng=None, eps=None) -> Tensor:
    """sample = mu + exp(logvar / 2) * eps, eps ~ N(0, 1).

    Pass `rng` to draw eps, or `eps` explicitly (0 gives sample = mu).
    Gradients flow to mu and logvar; eps is a constant.
    """
    if eps is None:
        if rng is None:
            eps = np.zeros(mu.shape)
        else:
            eps = rng.standard_normal(mu.shape)
    else:
        eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), mu.shape)
    return mu + exp(logvar * 0.5) * Tensor(eps)


def _masked_mean_pool(h: Tensor, mask: np.ndarray) -> Tensor:
    """(B, T, d) -> (B, d) averaging unmasked steps only."""
    w = np.asarray(mask, dtype=np.float64)
    denom = np.maximum(w.sum(axis=1, keepdims=True), 1.0)
    return (h * Tensor(w[:, :, None])).sum(axis=1) * Tensor(1.0 / denom)


class _ClinicalHead(nn.Module):
    """Two-layer task head reading the non-sensitive subspace only."""

    def __init__(self, nz: int, task: str, rng):
        super().__init__()
        if task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {task!r}")
        self.task = task
        self.fc1 = nn.Linear(nz, _CLINICAL_HIDDEN, rng)
        self.fc2 = nn.Linear(_CLINICAL_HIDDEN, TASK_OUT_DIM[task], rng)

    def forward(self, z: Tensor) -> Tensor:
        return self.fc2(relu(self.fc1(z)))


class _AttributeHead(nn.Module):
    """Binary classifier from the pooled sensitive subspace."""

    def __init__(self, s_dim: int, rng):
        super().__init__()
        self.fc1 = nn.Linear(s_dim, _ATTR_HIDDEN, rng)
        self.fc2 = nn.Linear(_ATTR_HIDDEN, 2, rng)

    def forward(self, b: Tensor) -> Tensor:
        return self.fc2(relu(self.fc1(b)))


class Discriminator(nn.Module):
    """4-layer leaky-ReLU network scoring (z, b) rows: joint vs product."""

    def __init__(self, in_dim: int, rng):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, _DISC_WIDTH, rng)
        self.fc2 = nn.Linear(_DISC_WIDTH, _DISC_WIDTH, rng)
        self.fc3 = nn.Linear(_DISC_WIDTH, _DISC_WIDTH, rng)
        self.fc4 = nn.Linear(_DISC_WIDTH, 2, rng)

    def forward(self, rows: Tensor) -> Tensor:
        h = leaky_relu(self.fc1(rows))
        h = leaky_relu(self.fc2(h))
        h = leaky_relu(self.fc3(h))
        return self.fc4(h)


class _Decoder(nn.Module):
    """Mirrored causal stack mapping latent channels back to m channels."""

    def __init__(self, cfg: EncoderConfig, in_dim: int, rng):
        super().__init__()
        ch = cfg.scaled("tcn_channels")
        self.blocks = nn.ModuleList()
        in_ch = in_dim
        for i in range(cfg.tcn_blocks):
            dilation = 2 ** (cfg.tcn_blocks - 1 - i)
            self.blocks.append(
                TemporalBlock(in_ch, ch, cfg.tcn_kernel, dilation, cfg.tcn_dropout, rng)
            )
            in_ch = ch
        self.out = CausalConv1d(ch, cfg.in_channels, 1, 1, rng)

    def forward(self, lat: Tensor, rng=None) -> Tensor:
        h = lat
        for block in self.blocks:
            h = block(h, rng)
        return self.out(h)


class SteerVAE(nn.Module):
    """TCN encoder with partitioned posteriors, causal decoder, task head.

    Submodules: backbone (TCN), posterior heads (z_mu/z_logvar/b_mu/b_logvar,
    logvar heads zero-initialized so initial posterior variance is 1),
    decoder, clinical head (z only), one attribute head per sensitive channel,
    and the total-correlation discriminator.
    """

    def __init__(self, enc_cfg: EncoderConfig, h: SteerHyperparams, task: str, rng):
        super().__init__()
        if enc_cfg.kind != "tcn":
            raise ValueError(f"the VAE backbone is tcn, got {enc_cfg.kind!r}")
        if h.latent_mode == "pooled" and task == "sofa":
            raise ValueError("forecasting needs per-timestep latents")
        self.enc_cfg = enc_cfg
        self.h = h
        self.task = task
        d = enc_cfg.hidden_dim
        self.backbone = TCNEncoder(enc_cfg, rng)
        self.z_mu_head = nn.Linear(d, h.nz, rng)
        self.z_logvar_head = _zeroed(nn.Linear(d, h.nz, rng))
        self.b_mu_head = nn.Linear(d, h.sensitive_dim, rng)
        self.b_logvar_head = _zeroed(nn.Linear(d, h.sensitive_dim, rng))
        self.decoder = _Decoder(enc_cfg, h.nz + h.sensitive_dim, rng)
        self.clinical = _ClinicalHead(h.nz, task, rng)
        self.attr_heads = nn.ModuleList(
            [_AttributeHead(h.sensitive_dim, rng) for _ in h.attributes]
        )
        self.disc = Discriminator(h.nz + h.sensitive_dim, rng)

    # -- posterior ------------------------------------------------------

    def encode(self, x: Tensor, mask: np.ndarray, rng=None,
               sample_rng=None) -> LatentPartition:
        """Posteriors plus reparameterized samples.

        `rng` drives backbone dropout (training only); `sample_rng` draws the
        reparameterization noise — when None, eps = 0 and samples equal the
        means (the deterministic pass used for evaluation).
        """
        feats = self.backbone(x, mask, rng)  # (B, T, d)
        if self.h.latent_mode == "pooled":
            feats = _masked_mean_pool(feats, mask)
        z_mu = self.z_mu_head(feats)
        z_logvar = clip(self.z_logvar_head(feats), LOGVAR_MIN, LOGVAR_MAX)
        b_mu = self.b_mu_head(feats)
        b_logvar = clip(self.b_logvar_head(feats), LOGVAR_MIN, LOGVAR_MAX)
        return LatentPartition(
            z_mu=z_mu,
            z_logvar=z_logvar,
            b_mu=b_mu,
            b_logvar=b_logvar,
            z_sample=reparameterize(z_mu, z_logvar, rng=sample_rng),
            b_sample=reparameterize(b_mu, b_logvar, rng=sample_rng),
            latent_mode=self.h.latent_mode,
        )

    # -- decoder ----------------------------------------------------------

    def decode(self, z: Tensor, b: Tensor, t_len: int | None = None,
               rng=None) -> Tensor:
        """(z, b) -> reconstruction (B, m, T).

        Pooled-mode latents are tiled across `t_len` steps before decoding.
        """
        if self.h.latent_mode == "pooled":
            if t_len is None:
                raise ValueError("pooled-mode decoding needs t_len")
            lat = concat([z, b], axis=1)  # (B, D)
            b_sz, d = lat.shape
            lat = lat.reshape(b_sz, d, 1) * Tensor(np.ones((1, 1, t_len)))
        else:
            lat = concat([z, b], axis=2).swapaxes(1, 2)  # (B, D, T)
        return self.decoder(lat, rng)

    # -- task head --------------------------------------------------------

    def clinical_outputs(self, z: Tensor) -> Tensor:
        """Per-step predictions (per-timestep mode) or a single row (pooled).

        Reads z only: the sensitive subspace has no path into this head.
        """
        return self.clinical(z)

    def pooled_b(self, partition: LatentPartition, mask: np.ndarray) -> Tensor:
        if self.h.latent_mode == "pooled":
            return partition.b_sample
        return _masked_mean_pool(partition.b_sample, mask)

    def attr_logits(self, pooled_b: Tensor) -> list[Tensor]:
        return [head(pooled_b) for head in self.attr_heads]


def _zeroed(lin: nn.Linear) -> nn.Linear:
    lin.w.data[:] = 0.0
    lin.b.data[:] = 0.0
    return lin
