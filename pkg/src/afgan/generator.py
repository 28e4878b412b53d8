"""Artificial fingerprint generator: three autoencoders trained on real images.

``high`` halves the side six times (bottleneck S/64) and rebuilds with six
stride-2 transposed convolutions, ``low`` does one halving and one
transposed convolution, ``non`` keeps the side fixed with stride-1
convolutions only. Reconstructions carry the upsampling path's artifacts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from afgan import layers, ops
from afgan.config import RunConfig
from afgan.data import ImageRecord
from afgan.layers import ConvLayer
from afgan.optim import Adam
from afgan.tensor import Tensor, no_grad

log = logging.getLogger(__name__)

LEVEL_DEPTH = {"high": 6, "low": 1, "non": 0}
LEVEL_IDS = {"high": 1, "low": 2, "non": 3, "custom": 4}
HIGH_WIDTHS = (16, 32, 64, 64, 64, 64)
DEFAULT_WIDTH = {"low": 32, "non": 8}


class SelfSupervisionError(ValueError):
    """Non-real images were offered to generator training."""


@dataclass(frozen=True)
class AutoencoderSpec:
    level: str
    side: int = 64
    channels: int = 3
    width: int | None = None  # hidden channels of low/non; None picks the default
    depth: int | None = None  # only for level="custom"

    def __post_init__(self):
        if self.level not in LEVEL_IDS:
            raise ValueError(f"unknown level {self.level!r}")
        if self.level == "custom":
            if self.depth is None or not 1 <= self.depth <= len(HIGH_WIDTHS):
                raise ValueError("custom level needs 1 <= depth <= 6")
        elif self.depth is not None and self.depth != LEVEL_DEPTH[self.level]:
            raise ValueError(f"level {self.level} has fixed depth {LEVEL_DEPTH[self.level]}")
        d = 2**self.t
        if self.side % d or self.side < d:
            raise ValueError(
                f"level {self.level} needs side divisible by 2^{self.t}={d}, got {self.side}"
            )

    @property
    def t(self) -> int:
        return self.depth if self.level == "custom" else LEVEL_DEPTH[self.level]

    @property
    def bottleneck_side(self) -> int:
        return self.side // 2**self.t

    @property
    def hidden(self) -> int:
        return self.width or DEFAULT_WIDTH.get(self.level, 0)

    def encoder_layers(self) -> list[ConvLayer]:
        c, w = self.channels, self.hidden
        if self.level == "non":
            return [layers.same(c, w), layers.same(w, w)]
        if self.level == "low":
            return [layers.down(c, w)]
        widths = (c,) + HIGH_WIDTHS[: self.t]
        return [layers.down(a, b) for a, b in zip(widths[:-1], widths[1:])]

    def decoder_layers(self) -> list[ConvLayer]:
        c, w = self.channels, self.hidden
        if self.level == "non":
            return [layers.same(w, w), layers.same(w, c, relu=False)]
        if self.level == "low":
            return [layers.up(w, c, relu=False)]
        widths = ((c,) + HIGH_WIDTHS[: self.t])[::-1]
        pairs = list(zip(widths[:-1], widths[1:]))
        return [layers.up(a, b, relu=i < len(pairs) - 1) for i, (a, b) in enumerate(pairs)]


@dataclass
class AutoencoderModel:
    spec: AutoencoderSpec
    params: dict[str, Tensor]
    epochs_seen: int = 0
    final_loss: float | None = None
    loss_curve: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)

    @property
    def layers(self) -> list[ConvLayer]:
        return self.spec.encoder_layers() + self.spec.decoder_layers()

    def encode(self, x: Tensor) -> Tensor:
        enc = self.spec.encoder_layers()
        return layers.run_stack(enc, self.params, x)

    def forward(self, x: Tensor) -> Tensor:
        return layers.run_stack(self.layers, self.params, x)

    __call__ = forward


def build_autoencoder(spec: AutoencoderSpec, seed: int = 0) -> AutoencoderModel:
    rng = np.random.default_rng([seed, LEVEL_IDS[spec.level], spec.t])
    return AutoencoderModel(spec, layers.init_stack(spec.encoder_layers() + spec.decoder_layers(), rng))


def to_batch(pixels: list[np.ndarray] | np.ndarray) -> np.ndarray:
    """Stack ``[S, S, C]`` images into an NCHW float32 array."""
    arr = np.asarray(pixels, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return np.ascontiguousarray(arr.transpose(0, 3, 1, 2))


def from_batch(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr.transpose(0, 2, 3, 1))


def _check_corpus(model: AutoencoderModel, corpus: list[ImageRecord]) -> None:
    if not corpus:
        raise ValueError("training corpus is empty")
    for rec in corpus:
        if not isinstance(rec, ImageRecord) or rec.tag != "real":
            tag = getattr(rec, "tag", type(rec).__name__)
            raise SelfSupervisionError(f"generator training accepts only real images, got {tag!r}")
        if rec.pixels.shape != (model.spec.side, model.spec.side, model.spec.channels):
            raise ValueError(
                f"image {rec.id} has shape {rec.pixels.shape}, model expects "
                f"{(model.spec.side, model.spec.side, model.spec.channels)}"
            )


def train_autoencoder(
    model: AutoencoderModel,
    corpus: list[ImageRecord],
    config: RunConfig | None = None,
    epochs: int | None = None,
) -> list[float]:
    """Fit ``model`` to reproduce ``corpus`` under mean squared error.

    Only ``real``-tagged records are accepted. Returns the per-epoch mean
    loss; per-step losses are appended to ``model.step_losses``.
    """
    config = config or RunConfig(side=model.spec.side)
    _check_corpus(model, corpus)
    epochs = config.gen_epochs if epochs is None else epochs
    data = to_batch([rec.pixels for rec in corpus])
    rng = np.random.default_rng([config.seed, LEVEL_IDS[model.spec.level], 7])
    opt = Adam(list(model.params.values()), lr=config.gen_lr)
    bs = config.batch_size
    curve: list[float] = []
    steps: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(order), bs):
            x = Tensor(data[order[start : start + bs]])
            loss = ops.mse_loss(model(x), x)
            opt.zero_grad()
            loss.backward()
            opt.step()
            value = loss.item()
            steps.append(value)
            total += value * len(x.data)
        curve.append(total / len(data))
        log.info("G_%s epoch %d/%d loss %.6f", model.spec.level, epoch + 1, epochs, curve[-1])
    model.epochs_seen += epochs
    model.loss_curve.extend(curve)
    model.step_losses.extend(steps)
    if curve:
        model.final_loss = curve[-1]
    for p in model.params.values():
        if not np.isfinite(p.data).all():
            raise FloatingPointError(f"non-finite parameters after training G_{model.spec.level}")
    return curve


def reconstruct_array(model: AutoencoderModel, images: np.ndarray, chunk: int = 32) -> np.ndarray:
    """Reconstruct a stack ``[N, S, S, C]``; output is clamped to [0, 1]."""
    images = np.asarray(images, np.float32)
    expect = (model.spec.side, model.spec.side, model.spec.channels)
    if images.shape[1:] != expect:
        raise ValueError(f"images have shape {images.shape[1:]}, model expects {expect}")
    out = np.empty_like(images)
    with no_grad():
        for start in range(0, len(images), chunk):
            y = model(Tensor(to_batch(images[start : start + chunk]))).data
            out[start : start + chunk] = from_batch(y)
    return np.clip(out, 0.0, 1.0)


def reconstruct(model: AutoencoderModel, image: np.ndarray | ImageRecord) -> np.ndarray:
    pixels = image.pixels if isinstance(image, ImageRecord) else image
    return reconstruct_array(model, np.asarray(pixels)[None])[0]


def reconstruct_corpus(
    models: dict[str, AutoencoderModel], corpus: list[ImageRecord]
) -> list[ImageRecord]:
    """One reconstruction per (generator, image), tagged ``fp-<level>``."""
    sides = {m.spec.side for m in models.values()}
    if len(sides) > 1:
        raise ValueError(f"generators disagree on image side: {sorted(sides)}")
    stack = np.asarray([rec.pixels for rec in corpus], np.float32)
    out: list[ImageRecord] = []
    for level, model in models.items():
        recon = reconstruct_array(model, stack)
        tag = f"fp-{level}" if level in LEVEL_DEPTH else "external-fake"
        for rec, pix in zip(corpus, recon):
            out.append(ImageRecord(f"{rec.id}@{level}", pix, tag, source=rec.id))
    return out
