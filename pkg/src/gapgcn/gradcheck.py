"""Central finite-difference gradient checking against analytic gradients.

The closure must be deterministic between calls (fixed dropout masks, fixed
batch-norm mode); it computes the loss and fills ``store.grads``. Per
coordinate the numeric gradient is (f(t+eps) - f(t-eps)) / 2 eps. The
relative error divides by max(|analytic|, |numeric|) with a floor of
1e-3 times the largest gradient magnitude seen, so dead coordinates
(analytic and numeric both ~0) do not drown the check in rounding noise
while a sign flip on any meaningful coordinate still reads as ~2.
"""

from __future__ import annotations

import math

import numpy as np

from .params import ParamStore


def grad_check(closure, store: ParamStore, eps: float = 1e-6,
               param_names=None) -> float:
    """Return the max relative error between analytic and numeric gradients."""
    names = list(param_names) if param_names is not None else \
        list(store.params)

    store.zero_grads()
    loss0 = closure()
    if not math.isfinite(loss0):
        raise ValueError(f"non-finite loss {loss0}")
    analytic = {n: store.grads[n].copy() for n in names}

    numeric = {}
    for name in names:
        p = store.params[name]
        num = np.zeros_like(p, dtype=np.float64)
        flat = p.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = closure()
            flat[i] = orig - eps
            lm = closure()
            flat[i] = orig
            if not (math.isfinite(lp) and math.isfinite(lm)):
                raise ValueError("non-finite loss during finite differences")
            nflat[i] = (lp - lm) / (2.0 * eps)
        numeric[name] = num

    gmax = 0.0
    for name in names:
        gmax = max(gmax,
                   float(np.abs(analytic[name]).max(initial=0.0)),
                   float(np.abs(numeric[name]).max(initial=0.0)))
    floor = max(1e-3 * gmax, 1e-8)

    worst = 0.0
    for name in names:
        a = analytic[name].astype(np.float64)
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max(initial=0.0)))
    return worst
