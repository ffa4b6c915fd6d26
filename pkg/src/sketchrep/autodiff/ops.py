"""Differentiable operations over Tensors.

Each op returns a new Tensor whose backward closure scatters the output
gradient to the parents that require it. Scalar constants stay Python
floats so float32 graphs are not silently promoted.
"""

from __future__ import annotations

import numpy as np

from ..errors import EmptyBatch, LabelOutOfRange, ShapeMismatch
from .tensor import Tensor, accumulate


def constant(values, dtype=None):
    arr = np.asarray(values, dtype=dtype) if dtype is not None else np.asarray(values)
    return Tensor(arr, requires_grad=False)


def _unbroadcast(grad, shape):
    """Sum grad over the axes that broadcasting expanded."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b):
    out = Tensor(a.values + b.values, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            accumulate(a, _unbroadcast(g, a.values.shape))
        if b.requires_grad:
            accumulate(b, _unbroadcast(g, b.values.shape))

    out._backward = bw
    return out


def sub(a, b):
    out = Tensor(a.values - b.values, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            accumulate(a, _unbroadcast(g, a.values.shape))
        if b.requires_grad:
            accumulate(b, _unbroadcast(-g, b.values.shape))

    out._backward = bw
    return out


def mul(a, b):
    out = Tensor(a.values * b.values, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            accumulate(a, _unbroadcast(g * b.values, a.values.shape))
        if b.requires_grad:
            accumulate(b, _unbroadcast(g * a.values, b.values.shape))

    out._backward = bw
    return out


def mul_const(a, c):
    """a * c with c a plain scalar or array carrying no gradient."""
    out = Tensor(a.values * c, parents=(a,))

    def bw(g):
        accumulate(a, _unbroadcast(g * c, a.values.shape))

    out._backward = bw
    return out


def add_const(a, c):
    out = Tensor(a.values + c, parents=(a,))
    out._backward = lambda g: accumulate(a, _unbroadcast(g, a.values.shape))
    return out


def rsub_const(c, a):
    """c - a with constant c."""
    out = Tensor(c - a.values, parents=(a,))
    out._backward = lambda g: accumulate(a, _unbroadcast(-g, a.values.shape))
    return out


def matmul(a, b):
    if a.values.shape[-1] != b.values.shape[0]:
        raise ShapeMismatch("matmul", f"(..,{b.values.shape[0]})", a.values.shape)
    out = Tensor(a.values @ b.values, parents=(a, b))

    def bw(g):
        if a.requires_grad:
            accumulate(a, g @ b.values.T)
        if b.requires_grad:
            accumulate(b, a.values.T @ g)

    out._backward = bw
    return out


def dense(x, w, b):
    """x @ w + b, the fully-connected layer."""
    if x.values.shape[-1] != w.values.shape[0]:
        raise ShapeMismatch("dense", f"(..,{w.values.shape[0]})", x.values.shape)
    out = Tensor(x.values @ w.values + b.values, parents=(x, w, b))

    def bw(g):
        if x.requires_grad:
            accumulate(x, g @ w.values.T)
        if w.requires_grad:
            accumulate(w, x.values.T @ g)
        if b.requires_grad:
            accumulate(b, g.sum(axis=0) if g.ndim > 1 else g)

    out._backward = bw
    return out


def relu(x):
    out = Tensor(np.maximum(x.values, 0), parents=(x,))
    out._backward = lambda g: accumulate(x, g * (x.values > 0))
    return out


def sigmoid(x):
    v = 1.0 / (1.0 + np.exp(-x.values))
    out = Tensor(v, parents=(x,))
    out._backward = lambda g: accumulate(x, g * v * (1.0 - v))
    return out


def tanh(x):
    v = np.tanh(x.values)
    out = Tensor(v, parents=(x,))
    out._backward = lambda g: accumulate(x, g * (1.0 - v * v))
    return out


def reshape(x, shape):
    out = Tensor(x.values.reshape(shape), parents=(x,))
    out._backward = lambda g: accumulate(x, g.reshape(x.values.shape))
    return out


def concat(tensors, axis=1):
    out = Tensor(np.concatenate([t.values for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.values.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                accumulate(t, g[tuple(sl)])

    out._backward = bw
    return out


def narrow(x, start, size, axis=1):
    """Contiguous slice along one axis."""
    sl = [slice(None)] * x.values.ndim
    sl[axis] = slice(start, start + size)
    sl = tuple(sl)
    out = Tensor(x.values[sl], parents=(x,))

    def bw(g):
        full = np.zeros_like(x.values)
        full[sl] = g
        accumulate(x, full)

    out._backward = bw
    return out


def sum_all(x):
    out = Tensor(np.asarray(x.values.sum()), parents=(x,))
    out._backward = lambda g: accumulate(x, np.broadcast_to(g, x.values.shape))
    return out


def mean_all(x):
    n = x.values.size
    out = Tensor(np.asarray(x.values.mean()), parents=(x,))
    out._backward = lambda g: accumulate(x, np.broadcast_to(g / n, x.values.shape))
    return out


def mean_row_sumsq(x):
    """mean over rows of the squared L2 norm of each row: (1/B) sum_n ||x_n||^2."""
    b = x.values.shape[0]
    out = Tensor(np.asarray((x.values ** 2).sum() / b), parents=(x,))
    out._backward = lambda g: accumulate(x, g * 2.0 * x.values / b)
    return out


def softmax(logits):
    z = logits.values - logits.values.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean over the batch of -log softmax probability of the true class.

    Natural log; numerically shift-invariant in the logits. labels is an
    integer array of shape (B,).
    """
    labels = np.asarray(labels)
    if logits.values.ndim != 2:
        raise ShapeMismatch("softmax_cross_entropy", "(B, L)", logits.values.shape)
    b, l = logits.values.shape
    if b == 0:
        raise EmptyBatch("empty logit batch")
    if labels.min() < 0 or labels.max() >= l:
        raise LabelOutOfRange(f"labels must lie in [0, {l})")
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float((logsumexp - z[np.arange(b), labels]).mean())
    out = Tensor(np.asarray(loss, dtype=logits.values.dtype), parents=(logits,))

    def bw(g):
        p = np.exp(z - logsumexp[:, None])
        p[np.arange(b), labels] -= 1.0
        accumulate(logits, g * p / b)

    out._backward = bw
    return out


def conv2d(x, w, b, pad=1):
    """3x3 (or any odd k) same-padded convolution, stride 1, via im2col.

    x: (B, C, H, W), w: (F, C, k, k), b: (F,).
    """
    bsz, c, h, wd = x.values.shape
    f, cw, kh, kw = w.values.shape
    if cw != c:
        raise ShapeMismatch("conv2d", f"(F,{c},k,k)", w.values.shape)
    xp = np.pad(x.values, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    # (B, C, H, W, kh, kw) -> (B*H*W, C*kh*kw)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * h * wd, c * kh * kw)
    wmat = w.values.reshape(f, -1).T
    outv = (cols @ wmat + b.values).reshape(bsz, h, wd, f).transpose(0, 3, 1, 2)
    out = Tensor(np.ascontiguousarray(outv), parents=(x, w, b))

    def bw(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(bsz * h * wd, f)
        if w.requires_grad:
            accumulate(w, (cols.T @ gmat).T.reshape(f, c, kh, kw))
        if b.requires_grad:
            accumulate(b, gmat.sum(axis=0))
        if x.requires_grad:
            gcols = (gmat @ wmat.T).reshape(bsz, h, wd, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            gxp = np.zeros_like(xp)
            for di in range(kh):
                for dj in range(kw):
                    gxp[:, :, di:di + h, dj:dj + wd] += gcols[:, :, :, :, di, dj]
            accumulate(x, gxp[:, :, pad:pad + h, pad:pad + wd])

    out._backward = bw
    return out


def maxpool2d(x, size=2):
    """size×size max pooling with stride = size; H and W must divide evenly."""
    bsz, c, h, w = x.values.shape
    if h % size or w % size:
        raise ShapeMismatch("maxpool2d", f"dims divisible by {size}", x.values.shape)
    ho, wo = h // size, w // size
    tiles = x.values.reshape(bsz, c, ho, size, wo, size).transpose(0, 1, 2, 4, 3, 5)
    tiles = tiles.reshape(bsz, c, ho, wo, size * size)
    arg = tiles.argmax(axis=-1)
    out = Tensor(np.ascontiguousarray(np.take_along_axis(tiles, arg[..., None], axis=-1)[..., 0]), parents=(x,))

    def bw(g):
        gt = np.zeros_like(tiles)
        np.put_along_axis(gt, arg[..., None], g[..., None], axis=-1)
        gt = gt.reshape(bsz, c, ho, wo, size, size).transpose(0, 1, 2, 4, 3, 5)
        accumulate(x, gt.reshape(bsz, c, h, w))

    out._backward = bw
    return out
