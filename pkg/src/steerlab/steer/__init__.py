"""Partitioned-latent VAE: sensitive content in b, clinical content in z."""

from .eval import (
    SANITIZE_MODES,
    SteerEvalReport,
    disentanglement_eval,
    latent_features,
    noise_out_sensitive,
    sanitized_b_features,
    steer_predict_ihm,
    steer_predict_sofa,
)
from .hyperparams import LATENT_MODES, SENSITIVE_ATTRIBUTES, SteerHyperparams
from .losses import (
    LossBreakdown,
    clinical_head_loss,
    discriminator_loss,
    elbo_terms,
    kl_standard_normal,
    latent_rows,
    permuted_rows,
    predictiveness_loss,
    steer_loss,
    tc_adversary,
    tc_estimate,
)
from .training import (
    SteerDivergedError,
    SteerHistory,
    sensitive_label_table,
    train_steer,
)
from .vae import Discriminator, LatentPartition, SteerVAE, reparameterize

__all__ = [
    "SANITIZE_MODES",
    "LATENT_MODES",
    "SENSITIVE_ATTRIBUTES",
    "Discriminator",
    "LatentPartition",
    "LossBreakdown",
    "SteerDivergedError",
    "SteerEvalReport",
    "SteerHistory",
    "SteerHyperparams",
    "SteerVAE",
    "clinical_head_loss",
    "disentanglement_eval",
    "discriminator_loss",
    "elbo_terms",
    "kl_standard_normal",
    "latent_features",
    "latent_rows",
    "noise_out_sensitive",
    "permuted_rows",
    "predictiveness_loss",
    "reparameterize",
    "sanitized_b_features",
    "sensitive_label_table",
    "steer_loss",
    "steer_predict_ihm",
    "steer_predict_sofa",
    "tc_adversary",
    "tc_estimate",
    "train_steer",
]
