"""Differentiable operations used by the autoencoders and the detector.

All image tensors are NCHW. Convolution kernels follow the usual layouts:
``conv2d`` takes ``[K, C, kh, kw]`` and ``conv2d_transpose`` takes
``[C, K, kh, kw]`` so that the same kernel makes the two ops adjoint.
"""

from __future__ import annotations

import numpy as np

from afgan import _kernels
from afgan.tensor import Tensor, as_tensor, make_result


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


def _check4(name: str, t: Tensor) -> None:
    if t.data.ndim != 4:
        raise ShapeError(f"{name}: expected a 4-d tensor, got shape {t.shape}")


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _bias_grad(g: np.ndarray) -> np.ndarray:
    return g.sum(axis=(0, 2, 3))


# patch matrices are built per chunk of images so they stay cache resident;
# backward rebuilds them instead of holding them across the graph
_CHUNK_FLOATS = 1 << 18


def _chunks(n: int, per_item: int):
    step = max(1, _CHUNK_FLOATS // max(per_item, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``x [N,C,H,W]`` with ``w [K,C,kh,kw]``."""
    _check4("conv2d input", x)
    _check4("conv2d kernel", w)
    n, c, h, wd = x.shape
    k, kc, kh, kw = w.shape
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be >= 1, got {stride}")
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels but kernel expects {kc} (kernel {w.shape})")
    hp, wp = h + 2 * pad, wd + 2 * pad
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    if b is not None and b.shape != (k,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({k},)")

    xp = _pad(x.data, pad)
    ho, wo = _kernels.out_size(hp, kh, stride), _kernels.out_size(wp, kw, stride)
    wmat = w.data.reshape(k, -1)
    per_item = c * kh * kw * ho * wo
    out = np.empty((n, k, ho, wo), dtype=np.result_type(x.dtype, w.dtype))
    for sl in _chunks(n, per_item):
        cols = _kernels.im2col(xp[sl], kh, kw, stride)
        out[sl] = (wmat @ cols).reshape(k, -1, ho, wo).transpose(1, 0, 2, 3)
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(g: np.ndarray):
        gx = gw = gb = None
        gxp = np.empty(xp.shape, dtype=g.dtype) if x.requires_grad else None
        if w.requires_grad:
            gw = np.zeros_like(wmat)
        for sl in _chunks(n, per_item):
            gmat = g[sl].transpose(1, 0, 2, 3).reshape(k, -1)
            if gxp is not None:
                gxp[sl] = _kernels.col2im(wmat.T @ gmat, xp[sl].shape, kh, kw, stride)
            if gw is not None:
                gw += gmat @ _kernels.im2col(xp[sl], kh, kw, stride).T
        if gxp is not None:
            gx = gxp[:, :, pad : pad + h, pad : pad + wd]
        if gw is not None:
            gw = gw.reshape(w.shape)
        if b is not None and b.requires_grad:
            gb = _bias_grad(g)
        return gx, gw, gb

    inputs = (x, w) if b is None else (x, w, b)
    return make_result(out, "conv2d", inputs, backward)


def conv2d_transpose(
    x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0
) -> Tensor:
    """Adjoint of :func:`conv2d`: ``x [N,C,H,W]``, ``w [C,K,kh,kw]`` -> ``[N,K,H',W']``.

    ``H' = (H - 1) * stride - 2 * pad + kh``.
    """
    _check4("conv2d_transpose input", x)
    _check4("conv2d_transpose kernel", w)
    n, c, h, wd = x.shape
    kc, k, kh, kw = w.shape
    if stride < 1:
        raise ShapeError(f"conv2d_transpose: stride must be >= 1, got {stride}")
    if kc != c:
        raise ShapeError(
            f"conv2d_transpose: input has {c} channels but kernel expects {kc} (kernel {w.shape})"
        )
    hp, wp = (h - 1) * stride + kh, (wd - 1) * stride + kw
    ho, wo = hp - 2 * pad, wp - 2 * pad
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d_transpose: padding {pad} leaves empty output from {hp}x{wp}")
    if b is not None and b.shape != (k,):
        raise ShapeError(f"conv2d_transpose: bias shape {b.shape} != ({k},)")

    wmat = w.data.reshape(c, -1)
    per_item = k * kh * kw * h * wd
    out = np.empty((n, k, ho, wo), dtype=np.result_type(x.dtype, w.dtype))
    for sl in _chunks(n, per_item):
        xmat = x.data[sl].transpose(1, 0, 2, 3).reshape(c, -1)
        nb = sl.stop - sl.start
        outp = _kernels.col2im(wmat.T @ xmat, (nb, k, hp, wp), kh, kw, stride)
        out[sl] = outp[:, :, pad : pad + ho, pad : pad + wo]
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(g: np.ndarray):
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.empty(x.shape, dtype=g.dtype)
        if w.requires_grad:
            gw = np.zeros_like(wmat)
        for sl in _chunks(n, per_item):
            gcols = _kernels.im2col(_pad(g[sl], pad), kh, kw, stride)
            if gx is not None:
                gx[sl] = (wmat @ gcols).reshape(c, -1, h, wd).transpose(1, 0, 2, 3)
            if gw is not None:
                gw += x.data[sl].transpose(1, 0, 2, 3).reshape(c, -1) @ gcols.T
        if gw is not None:
            gw = gw.reshape(w.shape)
        if b is not None and b.requires_grad:
            gb = _bias_grad(g)
        return gx, gw, gb

    inputs = (x, w) if b is None else (x, w, b)
    return make_result(out, "conv2d_transpose", inputs, backward)


def relu(x: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)
    return make_result(out, "relu", (x,), lambda g: (g * mask,))


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes: ``[N,C,H,W] -> [N,C]``."""
    _check4("global_avg_pool input", x)
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))
    scale = 1.0 / (h * w)

    def backward(g: np.ndarray):
        return (np.broadcast_to((g * scale)[:, :, None, None], x.shape).astype(x.dtype),)

    return make_result(out, "global_avg_pool", (x,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x [N,D] @ w [D,M] + b [M]``."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: cannot multiply {x.shape} by {w.shape}")
    out = x.data @ w.data
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ShapeError(f"linear: bias shape {b.shape} != ({w.shape[1]},)")
        out = out + b.data

    def backward(g: np.ndarray):
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.T @ g if w.requires_grad else None
        gb = g.sum(axis=0) if b is not None else None
        return gx, gw, gb

    inputs = (x, w) if b is None else (x, w, b)
    return make_result(out, "linear", inputs, backward)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return make_result(
        out, "add", (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g: np.ndarray):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(out, "mul", (a, b), backward)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return make_result(out, "sum", (x,), lambda g: (np.full(x.shape, g, dtype=x.dtype),))


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean over all elements of ``(pred - target) ** 2``."""
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: pred {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data.astype(pred.dtype, copy=False)
    out = np.asarray(np.mean(diff * diff), dtype=pred.dtype)
    scale = 2.0 / diff.size

    def backward(g: np.ndarray):
        gp = (g * scale) * diff
        return gp, -gp

    return make_result(out, "mse_loss", (pred, target), backward)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over rows of ``-labels . log_softmax(logits)``; soft labels allowed."""
    y = np.asarray(labels.data if isinstance(labels, Tensor) else labels, dtype=logits.dtype)
    if logits.data.ndim != 2 or y.shape != logits.shape:
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} vs labels {y.shape}")
    if (y < 0).any():
        raise ValueError("softmax_cross_entropy: labels must be nonnegative")
    row_err = np.abs(y.astype(np.float64).sum(axis=1) - 1.0)
    if (row_err > 1e-6).any():
        bad = int(np.argmax(row_err))
        raise ValueError(f"softmax_cross_entropy: label row {bad} sums to {y[bad].sum()!r}, not 1")
    n = logits.shape[0]
    logp = log_softmax(logits.data)
    out = np.asarray(-(y * logp).sum() / n, dtype=logits.dtype)

    def backward(g: np.ndarray):
        return ((np.exp(logp) - y) * (g / n),)

    return make_result(out, "softmax_cross_entropy", (logits,), backward)
