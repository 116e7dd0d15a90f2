"""Central-finite-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numeric_gradient(f: Callable[[], Tensor], p: Tensor, h: float = 1e-5,
                     indices=None) -> np.ndarray:
    """Central differences of scalar f() w.r.t. p, entry by entry.

    `f` must re-run the forward pass reading `p.data` in place. Returns an
    array shaped like p (entries not in `indices` are 0 when given).
    """
    grad = np.zeros_like(p.data)
    flat = p.data.ravel()
    gflat = grad.ravel()
    idx = range(flat.size) if indices is None else indices
    for k in idx:
        orig = flat[k]
        flat[k] = orig + h
        up = f().item()
        flat[k] = orig - h
        dn = f().item()
        flat[k] = orig
        gflat[k] = (up - dn) / (2.0 * h)
    return grad


def check_gradients(f: Callable[[], Tensor], params: Sequence[Tensor],
                    h: float = 1e-5, rtol: float = 1e-4,
                    max_entries_per_param: int | None = None,
                    seed: int = 0) -> float:
    """Compare analytic grads of scalar f() against central differences.

    Returns the worst relative error max|ga - gn| / max(1, |ga|, |gn|)
    over all checked entries and raises AssertionError beyond `rtol`.
    Large parameters can be spot-checked on a random subset of entries.
    """
    for p in params:
        p.grad = None
    out = f()
    out.backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        assert p.grad is not None, "parameter received no gradient"
        analytic = p.grad.copy()
        n = p.data.size
        if max_entries_per_param is not None and n > max_entries_per_param:
            indices = rng.choice(n, size=max_entries_per_param, replace=False)
        else:
            indices = range(n)
        numeric = numeric_gradient(f, p, h=h, indices=indices)
        af = analytic.ravel()
        nf = numeric.ravel()
        for k in indices:
            denom = max(1.0, abs(af[k]), abs(nf[k]))
            err = abs(af[k] - nf[k]) / denom
            worst = max(worst, err)
    assert worst <= rtol, f"gradient mismatch: worst relative error {worst:.3e} > {rtol:.1e}"
    return worst
