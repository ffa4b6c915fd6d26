"""Reverse-mode tape: a Tensor wraps a numpy array plus the closure that
propagates its output gradient to its parents.

The graph is built dynamically (define-by-run). Only nodes that can reach a
parameter (requires_grad propagates from parents) are recorded and visited
on the backward pass, so constant data subgraphs cost nothing.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonScalarOutput


class Tensor:
    __slots__ = ("values", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, values, requires_grad=False, parents=(), backward=None):
        self.values = values if isinstance(values, np.ndarray) else np.asarray(values, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def item(self):
        return float(self.values)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, dtype={self.values.dtype}, requires_grad={self.requires_grad})"


def accumulate(tensor, grad):
    """Add grad into tensor.grad (copying on first write: grads may alias views)."""
    if tensor.grad is None:
        tensor.grad = np.array(grad, copy=True)
    else:
        tensor.grad += grad


def backward(output):
    """Populate grads of every parameter reachable from a scalar output."""
    if output.values.size != 1:
        raise NonScalarOutput(f"backward needs a scalar, got shape {output.values.shape}")

    topo, visited = [], set()
    stack = [(output, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))

    output.grad = np.ones_like(output.values)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
