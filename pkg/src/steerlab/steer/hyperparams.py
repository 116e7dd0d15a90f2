"""Hyperparameters for the partitioned-latent VAE."""

from __future__ import annotations

from dataclasses import dataclass

LATENT_MODES = ("per-timestep", "pooled")

SENSITIVE_ATTRIBUTES = {1: ("sex",), 3: ("sex", "age", "race")}


@dataclass(frozen=True)
class SteerHyperparams:
    """Weights of the four-term objective and latent-space geometry.

    The minimization objective is
        total = -beta * s * (recon - kl) - alpha * predictiveness
                + gamma * tc + theta * l_ctp
    with s = 1/T when ``scale_elbo_by_T`` and 1 otherwise. ``nz`` is the
    non-sensitive latent width, ``sensitive_dim`` the sensitive width S
    (1 = sex only, 3 = sex/age/race). In per-timestep mode the latents are
    sequences (one posterior per step); in pooled mode a masked-mean readout
    yields a single posterior per record.
    """

    beta: float = 1e-4
    gamma: float = 0.5
    alpha: float = 0.5
    theta: float = 1.0
    scale_elbo_by_T: bool = False
    nz: int = 8
    sensitive_dim: int = 1
    latent_mode: str = "per-timestep"

    def __post_init__(self):
        for name in ("beta", "gamma", "alpha", "theta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.nz < 1:
            raise ValueError(f"nz must be >= 1, got {self.nz}")
        if self.sensitive_dim not in SENSITIVE_ATTRIBUTES:
            raise ValueError(
                f"sensitive_dim must be one of {sorted(SENSITIVE_ATTRIBUTES)}, "
                f"got {self.sensitive_dim}"
            )
        if self.latent_mode not in LATENT_MODES:
            raise ValueError(f"latent_mode must be one of {LATENT_MODES}")

    @property
    def attributes(self) -> tuple[str, ...]:
        return SENSITIVE_ATTRIBUTES[self.sensitive_dim]

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "theta": self.theta,
            "scale_elbo_by_T": self.scale_elbo_by_T,
            "nz": self.nz,
            "sensitive_dim": self.sensitive_dim,
            "latent_mode": self.latent_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SteerHyperparams":
        return cls(**d)
