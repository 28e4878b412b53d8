"""Patch extraction kernels behind the convolution ops.

Two interchangeable backends are provided: numba ``@njit`` loops and a
pure-numpy path built from strided slice copies. The numba path is used when
numba imports cleanly, unless ``AFGAN_DISABLE_NUMBA`` is set to a truthy value
in the environment before this module is imported.

Layout contract shared by both backends::

    x      [N, C, Hp, Wp]           already padded input
    cols   [C * kh * kw, N * Ho * Wo]   one column per output location
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("AFGAN_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by AFGAN_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def out_size(size: int, k: int, stride: int) -> int:
    return (size - k) // stride + 1


def im2col_numpy(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    n, c, hp, wp = x.shape
    ho, wo = out_size(hp, kh, stride), out_size(wp, kw, stride)
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=x.dtype)
    xt = x.transpose(1, 0, 2, 3)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i : i + (ho - 1) * stride + 1 : stride, j : j + (wo - 1) * stride + 1 : stride]
    return cols.reshape(c * kh * kw, n * ho * wo)


def col2im_numpy(
    cols: np.ndarray, shape: tuple[int, int, int, int], kh: int, kw: int, stride: int
) -> np.ndarray:
    n, c, hp, wp = shape
    ho, wo = out_size(hp, kh, stride), out_size(wp, kw, stride)
    g = cols.reshape(c, kh, kw, n, ho, wo)
    out = np.zeros((c, n, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + (ho - 1) * stride + 1 : stride, j : j + (wo - 1) * stride + 1 : stride] += g[:, i, j]
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


if HAVE_NUMBA:

    @njit(cache=True)
    def _im2col_nb(x, kh, kw, stride, out):  # pragma: no cover - compiled
        n, c, hp, wp = x.shape
        ho = (hp - kh) // stride + 1
        wo = (wp - kw) // stride + 1
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    r = (ch * kh + i) * kw + j
                    for b in range(n):
                        for oh in range(ho):
                            base = (b * ho + oh) * wo
                            src = oh * stride + i
                            for ow in range(wo):
                                out[r, base + ow] = x[b, ch, src, ow * stride + j]

    @njit(cache=True)
    def _col2im_nb(cols, kh, kw, stride, out):  # pragma: no cover - compiled
        n, c, hp, wp = out.shape
        ho = (hp - kh) // stride + 1
        wo = (wp - kw) // stride + 1
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        r = (ch * kh + i) * kw + j
                        for oh in range(ho):
                            base = (b * ho + oh) * wo
                            dst = oh * stride + i
                            for ow in range(wo):
                                out[b, ch, dst, ow * stride + j] += cols[r, base + ow]

    def im2col_numba(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
        n, c, hp, wp = x.shape
        ho, wo = out_size(hp, kh, stride), out_size(wp, kw, stride)
        out = np.empty((c * kh * kw, n * ho * wo), dtype=x.dtype)
        _im2col_nb(np.ascontiguousarray(x), kh, kw, stride, out)
        return out

    def col2im_numba(
        cols: np.ndarray, shape: tuple[int, int, int, int], kh: int, kw: int, stride: int
    ) -> np.ndarray:
        out = np.zeros(shape, dtype=cols.dtype)
        _col2im_nb(np.ascontiguousarray(cols), kh, kw, stride, out)
        return out

    im2col = im2col_numba
    col2im = col2im_numba
    BACKEND = "numba"
else:
    im2col = im2col_numpy
    col2im = col2im_numpy
    BACKEND = "numpy"
