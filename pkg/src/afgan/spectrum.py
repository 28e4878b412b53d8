"""2D spectra of images and fingerprint measurements on them.

The spectrum of one channel is ``fftshift(log(1 + |DFT|))`` min-max scaled to
[0, 1] per image and channel; channels are never mixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SpectrumImage:
    data: np.ndarray  # [S, S, C] normalized to [0, 1], DC at (S//2, S//2)
    raw: np.ndarray  # same layout before normalization

    @property
    def side(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def dft2d(channel: np.ndarray) -> np.ndarray:
    """Unnormalized forward 2D DFT of a square real grid."""
    x = np.asarray(channel)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"dft2d needs a square 2-d grid, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError("dft2d needs side >= 2")
    return np.fft.fft2(x)


def _as_hwc(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[0] != img.shape[1]:
        raise ValueError(f"expected a square [S, S] or [S, S, C] image, got {img.shape}")
    if img.shape[0] < 2:
        raise ValueError("spectrum needs side >= 2")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    return img


def _minmax(raw: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    lo = raw.min(axis=axes, keepdims=True)
    hi = raw.max(axis=axes, keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (raw - lo) / safe, 0.0)


def log_magnitude_spectrum(image: np.ndarray) -> SpectrumImage:
    img = _as_hwc(image)
    mag = np.abs(np.fft.fft2(img, axes=(0, 1)))
    raw = np.fft.fftshift(np.log1p(mag), axes=(0, 1))
    return SpectrumImage(_minmax(raw, (0, 1)), raw)


def spectra_batch(images: np.ndarray) -> np.ndarray:
    """Normalized spectra for a stack ``[N, S, S, C]``, returned as float32."""
    imgs = np.asarray(images, dtype=np.float64)
    raw = np.fft.fftshift(np.log1p(np.abs(np.fft.fft2(imgs, axes=(1, 2)))), axes=(1, 2))
    return _minmax(raw, (1, 2)).astype(np.float32)


def radius_grid(side: int) -> np.ndarray:
    """Euclidean distance of every shifted bin from the DC cell."""
    d = np.arange(side) - side // 2
    return np.sqrt(d[:, None] ** 2 + d[None, :] ** 2)


def radial_profile(spec: SpectrumImage) -> np.ndarray:
    """Mean normalized value per integer ring ``[r, r+1)``, r = 0 .. S//2 - 1.

    Channels are averaged.
    """
    side = spec.side
    n = side // 2
    ring = np.floor(radius_grid(side)).astype(np.intp).ravel()
    vals = spec.data.mean(axis=2).ravel()
    keep = ring < n
    sums = np.bincount(ring[keep], weights=vals[keep], minlength=n)
    counts = np.bincount(ring[keep], minlength=n)
    return sums / np.maximum(counts, 1)


def high_band_mask(side: int) -> np.ndarray:
    return radius_grid(side) > side / 4


def fingerprint_energy_score(spec: SpectrumImage) -> float:
    """Share of raw log-magnitude mass at radii above S/4, in [0, 1]."""
    total = spec.raw.sum()
    if total <= 0:
        return 0.0
    return float(spec.raw[high_band_mask(spec.side)].sum() / total)


def energy_scores(images: np.ndarray) -> np.ndarray:
    """:func:`fingerprint_energy_score` for each image of ``[N, S, S, C]``."""
    imgs = np.asarray(images, dtype=np.float64)
    raw = np.log1p(np.abs(np.fft.fft2(imgs, axes=(1, 2))))
    raw = np.fft.fftshift(raw, axes=(1, 2))
    mask = high_band_mask(imgs.shape[1])
    total = raw.sum(axis=(1, 2, 3))
    high = raw[:, mask].sum(axis=(1, 2))
    return np.where(total > 0, high / np.where(total > 0, total, 1.0), 0.0)
