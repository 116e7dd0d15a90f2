"""steerlab: a lab for measuring and removing static-attribute leakage in
clinical time-series models.

Subpackages: data (synthetic cohorts, task labels, batching), seqmodels
(causal LSTM/TCN/transformer encoders), training (loops and metrics),
probing (leakage audits), fusion (static-data fusion study), steer (the
latent-subspace VAE), cli (experiment runner).
"""

__version__ = "0.1.0"
