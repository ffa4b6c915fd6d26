"""Central finite-difference gradient verification.

Used by the test suite to check every differentiable op and loss in 64-bit
mode. The error measure is |a - fd| / max(1, |a|, |fd|) per entry: relative
for large gradients, absolute near zero.
"""

from __future__ import annotations

import numpy as np

from .tensor import backward


def finite_difference_check(build_loss, params, step=1e-5, max_entries=None, rng=None):
    """Return the worst per-entry error between tape grads and central
    differences.

    build_loss rebuilds the graph from the current parameter values and
    returns a scalar Tensor. With max_entries set, a random subset of each
    parameter's entries is probed (rng required).
    """
    params.zero_grads()
    backward(build_loss())
    grads = {n: t.grad.copy() for n, t in params.items()}

    worst = 0.0
    for name, t in params.items():
        flat = t.values.reshape(-1)
        gflat = grads[name].reshape(-1)
        idxs = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idxs = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(build_loss().values)
            flat[i] = orig - step
            f_minus = float(build_loss().values)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            a = float(gflat[i])
            err = abs(a - fd) / max(1.0, abs(a), abs(fd))
            if err > worst:
                worst = err
    return worst
