"""Slow, obviously-correct reference implementations used only by the tests.

Nothing here imports the package; each function is written from the
definition of the quantity it computes.
"""

from __future__ import annotations

import cmath
import itertools
import math

import numpy as np


def conv2d_loops(x, w, b=None, stride=1, pad=0):
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, k, ho, wo))
    for bi in range(n):
        for ko in range(k):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += xp[bi, ci, i * stride + di, j * stride + dj] * w[ko, ci, di, dj]
                    out[bi, ko, i, j] = acc + (0.0 if b is None else b[ko])
    return out


def conv2d_transpose_scatter(x, w, b=None, stride=1, pad=0):
    """Every input pixel stamps the kernel, scaled by its value, onto the output."""
    n, c, h, wd = x.shape
    _, k, kh, kw = w.shape
    hf, wf = (h - 1) * stride + kh, (wd - 1) * stride + kw
    full = np.zeros((n, k, hf, wf))
    for bi in range(n):
        for ci in range(c):
            for i in range(h):
                for j in range(wd):
                    full[bi, :, i * stride : i * stride + kh, j * stride : j * stride + kw] += x[bi, ci, i, j] * w[ci]
    out = full[:, :, pad : hf - pad, pad : wf - pad]
    if b is not None:
        out = out + np.asarray(b)[None, :, None, None]
    return out


def full_correlation_1ch(x, w):
    """Single-channel 2-D convolution with zero fill, output side H + kh - 1."""
    h, wd = x.shape
    kh, kw = w.shape
    out = np.zeros((h + kh - 1, wd + kw - 1))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            acc = 0.0
            for a in range(h):
                for bb in range(wd):
                    di, dj = i - a, j - bb
                    if 0 <= di < kh and 0 <= dj < kw:
                        acc += x[a, bb] * w[di, dj]
            out[i, j] = acc
    return out


def dft2d_direct(x):
    """O(S^4) sum straight from the DFT definition."""
    m, n = x.shape
    out = np.zeros((m, n), dtype=complex)
    for u in range(m):
        for v in range(n):
            acc = 0j
            for a in range(m):
                for bb in range(n):
                    acc += x[a, bb] * cmath.exp(-2j * math.pi * (u * a / m + v * bb / n))
            out[u, v] = acc
    return out


def mse_loop(pred, target):
    p, t = np.ravel(pred), np.ravel(target)
    total = 0.0
    for a, bb in zip(p, t):
        total += (float(a) - float(bb)) ** 2
    return total / len(p)


def auroc_pairwise(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def ap_threshold_sweep(scores, labels):
    """Step area under the precision-recall curve.

    Walks the ranking one item at a time (descending score, ties in input
    order), and for every item that raises recall adds
    ``precision * recall_increment``.
    """
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    n_pos = sum(labels)
    tp = fp = 0
    area = 0.0
    prev_recall = 0.0
    for i in order:
        if labels[i] == 1:
            tp += 1
        else:
            fp += 1
        recall = tp / n_pos
        area += (tp / (tp + fp)) * (recall - prev_recall)
        prev_recall = recall
    return area


def all_label_score_sets(max_size):
    """Every labeling with >= 1 positive and every score ranking (with ties) up to ``max_size``.

    Scores are drawn from small integer grids so tie patterns are covered.
    """
    for n in range(1, max_size + 1):
        for labels in itertools.product((0, 1), repeat=n):
            if sum(labels) == 0:
                continue
            yield n, list(labels)


def adam_scalar(x0, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    x, m, v = x0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return x


def bilinear_point(img, y, x):
    """Bilinear sample at fractional (y, x) with edge clamping."""
    h, w = img.shape[:2]
    y = min(max(y, 0.0), h - 1)
    x = min(max(x, 0.0), w - 1)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    fy, fx = y - y0, x - x0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy
