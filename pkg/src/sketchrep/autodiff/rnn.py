"""Bidirectional multi-layer GRU built from the primitive ops.

Gate weights are packed (z | r | h) along the output axis: one input matmul
and one recurrent matmul per step, then three slices. Padded steps are
masked so the carried hidden state ignores them, which makes the final
forward state the state at each sequence's true end and the final backward
state the state after consuming each full reversed sequence.
"""

from __future__ import annotations

import numpy as np

from ..errors import EmptySequence
from . import ops
from .params import uniform_fan_in
from .tensor import Tensor


def init_gru_params(pset, prefix, input_dim, hidden, layers, rng, dtype=np.float64):
    for layer in range(layers):
        in_dim = input_dim if layer == 0 else 2 * hidden
        for direction in ("fwd", "bwd"):
            base = f"{prefix}.l{layer}.{direction}"
            pset.add(f"{base}.W", uniform_fan_in(rng, (in_dim, 3 * hidden), in_dim, dtype))
            pset.add(f"{base}.U", uniform_fan_in(rng, (hidden, 3 * hidden), hidden, dtype))
            pset.add(f"{base}.b", np.zeros(3 * hidden, dtype=dtype))


def _gru_step(x_t, h, w, u, b, hidden):
    gx = ops.dense(x_t, w, b)
    gh = ops.matmul(h, u)
    z = ops.sigmoid(ops.add(ops.narrow(gx, 0, hidden), ops.narrow(gh, 0, hidden)))
    r = ops.sigmoid(ops.add(ops.narrow(gx, hidden, hidden), ops.narrow(gh, hidden, hidden)))
    cand = ops.tanh(ops.add(ops.narrow(gx, 2 * hidden, hidden),
                            ops.mul(r, ops.narrow(gh, 2 * hidden, hidden))))
    # h' = (1 - z) * h + z * cand
    return ops.add(ops.mul(ops.rsub_const(1.0, z), h), ops.mul(z, cand))


def _run_direction(steps, mask, pset, base, hidden, reverse):
    w, u, b = pset[f"{base}.W"], pset[f"{base}.U"], pset[f"{base}.b"]
    bsz = steps[0].values.shape[0]
    h = Tensor(np.zeros((bsz, hidden), dtype=steps[0].values.dtype))
    order = range(len(steps) - 1, -1, -1) if reverse else range(len(steps))
    states = [None] * len(steps)
    for t in order:
        h_new = _gru_step(steps[t], h, w, u, b, hidden)
        if mask is not None:
            m = mask[:, t:t + 1]
            if m.all():
                h = h_new
            else:
                h = ops.add(ops.mul_const(h_new, m), ops.mul_const(h, 1.0 - m))
        else:
            h = h_new
        states[t] = h
    return states


def gru_bidirectional(steps, pset, prefix, layers, hidden, mask=None):
    """Run the stacked bidirectional GRU over a list of per-step Tensors.

    steps: T Tensors of shape (B, F); mask: optional (B, T) {0,1} float array
    marking valid steps. Returns the concatenation of the top layer's final
    forward and backward hidden states, shape (B, 2*hidden).
    """
    if not steps:
        raise EmptySequence("GRU input has no steps")
    if hidden < 1 or layers < 1:
        raise ValueError("hidden and layers must be >= 1")
    seq = list(steps)
    for layer in range(layers):
        fwd = _run_direction(seq, mask, pset, f"{prefix}.l{layer}.fwd", hidden, reverse=False)
        bwd = _run_direction(seq, mask, pset, f"{prefix}.l{layer}.bwd", hidden, reverse=True)
        if layer < layers - 1:
            seq = [ops.concat([f, bk], axis=1) for f, bk in zip(fwd, bwd)]
    return ops.concat([fwd[-1], bwd[0]], axis=1)


def sequence_steps(sequences, dtype=np.float64):
    """Pad a batch of (T_i, 4) step arrays and build constant step Tensors.

    Returns (steps, mask): steps is a list of T_max Tensors (B, 4), mask is
    (B, T_max) with 1.0 on valid steps. Padding sits at the tail.
    """
    if len(sequences) == 0:
        raise EmptySequence("empty batch of sequences")
    arrays = [np.asarray(s.steps if hasattr(s, "steps") else s, dtype=dtype) for s in sequences]
    t_max = max(len(a) for a in arrays)
    bsz = len(arrays)
    batch = np.zeros((bsz, t_max, 4), dtype=dtype)
    mask = np.zeros((bsz, t_max), dtype=dtype)
    for i, a in enumerate(arrays):
        batch[i, : len(a)] = a
        mask[i, : len(a)] = 1.0
    steps = [Tensor(np.ascontiguousarray(batch[:, t, :])) for t in range(t_max)]
    return steps, mask
