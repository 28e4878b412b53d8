"""GAN detector: balanced batches, mixup, a small conv classifier, fine-tuning.

Class index 0 is real and index 1 is fake everywhere in this module.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from afgan import layers, ops
from afgan.config import RunConfig
from afgan.data import FP_TAGS, ImageRecord
from afgan.generator import to_batch
from afgan.optim import Adam
from afgan.spectrum import spectra_batch
from afgan.tensor import Tensor, no_grad

log = logging.getLogger(__name__)

DOMAINS = ("spectrum", "pixel")
WIDTHS = (32, 64, 64, 64)
REAL, FAKE = 0, 1


class DomainError(ValueError):
    """Inputs were prepared for a different domain than the model expects."""


# --- model -----------------------------------------------------------------


@dataclass
class DetectorModel:
    domain: str
    side: int
    channels: int
    params: dict[str, Tensor]
    widths: tuple[int, ...] = WIDTHS

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise DomainError(f"unknown input domain {self.domain!r}")

    @property
    def conv_layers(self) -> list[layers.ConvLayer]:
        chans = (self.channels,) + tuple(self.widths)
        return [layers.down(a, b) for a, b in zip(chans[:-1], chans[1:])]

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1:] != (self.channels, self.side, self.side):
            raise ValueError(
                f"detector expects [N, {self.channels}, {self.side}, {self.side}], got {x.shape}"
            )
        h = layers.run_stack(self.conv_layers, self.params, x)
        h = ops.global_avg_pool(h)
        return ops.linear(h, self.params["head.weight"], self.params["head.bias"])

    __call__ = forward


def build_detector(
    domain: str = "spectrum", side: int = 64, channels: int = 3, seed: int = 0,
    widths: tuple[int, ...] = WIDTHS,
) -> DetectorModel:
    rng = np.random.default_rng([seed, 101])
    chans = (channels,) + tuple(widths)
    convs = [layers.down(a, b) for a, b in zip(chans[:-1], chans[1:])]
    params = layers.init_stack(convs, rng)
    bound = 1.0 / math.sqrt(widths[-1])
    head = rng.uniform(-bound, bound, size=(widths[-1], 2)).astype(np.float32)
    params["head.weight"] = Tensor(head, requires_grad=True)
    params["head.bias"] = Tensor(np.zeros(2, np.float32), requires_grad=True)
    return DetectorModel(domain, side, channels, params, tuple(widths))


def prepare_inputs(pixels: np.ndarray, domain: str) -> np.ndarray:
    """Map ``[N, S, S, C]`` images in [0, 1] to detector inputs of the same shape."""
    if domain == "spectrum":
        return spectra_batch(pixels)
    if domain == "pixel":
        return np.asarray(pixels, np.float32)
    raise DomainError(f"unknown input domain {domain!r}")


# --- batches ---------------------------------------------------------------


@dataclass
class Pool:
    """Model-ready inputs for one side of the classification problem."""

    inputs: np.ndarray  # [N, S, S, C]
    tags: list[str]
    ids: list[str]
    domain: str

    @classmethod
    def from_records(cls, records: list[ImageRecord], domain: str) -> "Pool":
        if not records:
            return cls(np.zeros((0, 1, 1, 1), np.float32), [], [], domain)
        pixels = np.stack([r.pixels for r in records])
        return cls(prepare_inputs(pixels, domain), [r.tag for r in records], [r.id for r in records], domain)

    def __len__(self) -> int:
        return len(self.tags)

    def subset(self, keep: list[int]) -> "Pool":
        return Pool(self.inputs[keep], [self.tags[i] for i in keep], [self.ids[i] for i in keep], self.domain)


@dataclass
class LabeledBatch:
    samples: np.ndarray  # [B, S, S, C]
    labels: np.ndarray  # [B, 2] rows of (p_real, p_fake)
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.samples) != len(self.labels):
            raise ValueError(f"{len(self.samples)} samples but {len(self.labels)} labels")
        if len(self.labels) and np.abs(self.labels.sum(axis=1) - 1.0).max() > 1e-6:
            raise ValueError("every label row must sum to 1")

    def __len__(self) -> int:
        return len(self.samples)


def one_hot(cls_index: np.ndarray) -> np.ndarray:
    out = np.zeros((len(cls_index), 2), np.float32)
    out[np.arange(len(cls_index)), cls_index] = 1.0
    return out


def real_probability(n_real: int, n_fake: int, real_weight: float = 3.0, mode: str = "per-item") -> float:
    """Chance a batch slot draws a real image.

    ``per-item``: every real image weighs ``real_weight``, every fake weighs 1.
    ``class-ratio``: reals and fakes are drawn ``real_weight : 1`` as classes.
    """
    if mode == "per-item":
        return real_weight * n_real / (real_weight * n_real + n_fake)
    if mode == "class-ratio":
        return real_weight / (real_weight + 1.0)
    raise ValueError(f"unknown sampler mode {mode!r}")


def assemble_batch(
    real: Pool,
    fake: Pool,
    batch_size: int,
    rng: np.random.Generator,
    real_weight: float = 3.0,
    mode: str = "per-item",
) -> LabeledBatch:
    """Draw ``batch_size`` samples with replacement from the two pools.

    Fake slots pick a generator tag uniformly, then an item of that tag.
    """
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("assemble_batch needs non-empty real and fake pools")
    if batch_size < 2:
        raise ValueError(f"batch size must be >= 2, got {batch_size}")
    p_real = real_probability(len(real), len(fake), real_weight, mode)
    tag_names = sorted(set(fake.tags))
    by_tag = [np.flatnonzero(np.asarray(fake.tags) == t) for t in tag_names]

    is_real = rng.random(batch_size) < p_real
    real_idx = rng.integers(len(real), size=batch_size)
    tag_idx = rng.integers(len(tag_names), size=batch_size)
    within = rng.random(batch_size)

    samples = np.empty((batch_size,) + real.inputs.shape[1:], np.float32)
    provenance = []
    for slot in range(batch_size):
        if is_real[slot]:
            i = real_idx[slot]
            samples[slot] = real.inputs[i]
            provenance.append(real.tags[i])
        else:
            members = by_tag[tag_idx[slot]]
            i = members[int(within[slot] * len(members))]
            samples[slot] = fake.inputs[i]
            provenance.append(fake.tags[i])
    labels = one_hot(np.where(is_real, REAL, FAKE))
    return LabeledBatch(samples, labels, provenance)


@dataclass(frozen=True)
class MixupPolicy:
    enabled: bool = True
    alpha: float = 1.0

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.beta(self.alpha, self.alpha, size=size)


def mixup_pair(s_i, s_j, y_i, y_j, lam: float):
    """Convex blend of two samples and their labels with weight ``lam`` on the first."""
    s = lam * np.asarray(s_i) + (1.0 - lam) * np.asarray(s_j)
    y = lam * np.asarray(y_i) + (1.0 - lam) * np.asarray(y_j)
    return s, y


def mixup_batch(batch: LabeledBatch, policy: MixupPolicy, rng: np.random.Generator,
                lam: np.ndarray | None = None) -> LabeledBatch:
    """Replace every sample by a blend with a randomly chosen partner from the batch."""
    if not policy.enabled:
        return batch
    n = len(batch)
    if n < 2:
        raise ValueError("mixup needs at least two samples")
    partner = rng.permutation(n)
    lam = policy.draw(rng, n) if lam is None else np.broadcast_to(np.asarray(lam, np.float64), (n,))
    ls = lam.astype(np.float32).reshape((n,) + (1,) * (batch.samples.ndim - 1))
    samples = ls * batch.samples + (1 - ls) * batch.samples[partner]
    ly = lam[:, None]
    labels = ly * batch.labels + (1 - ly) * batch.labels[partner]
    prov = [f"{batch.provenance[i]}|{batch.provenance[j]}" for i, j in enumerate(partner)] if batch.provenance else []
    return LabeledBatch(samples.astype(np.float32), labels.astype(np.float64), prov)


# --- training --------------------------------------------------------------


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    provenance: set[str] = field(default_factory=set)


def _step(model: DetectorModel, opt: Adam, batch: LabeledBatch) -> tuple[float, int]:
    logits = model(Tensor(to_batch(batch.samples)))
    loss = ops.softmax_cross_entropy(logits, batch.labels)
    opt.zero_grad()
    loss.backward()
    opt.step()
    correct = int((logits.data.argmax(1) == batch.labels.argmax(1)).sum())
    return loss.item(), correct


def _check_fakes(fake_records: list[ImageRecord], allowed: tuple[str, ...]) -> None:
    for rec in fake_records:
        if rec.tag not in allowed:
            raise ValueError(f"fake record {rec.id} has tag {rec.tag!r}; expected one of {allowed}")


def training_pools(
    real_records: list[ImageRecord], fp_records: list[ImageRecord], config: RunConfig
) -> tuple[Pool, Pool]:
    """Validate and convert the corpora; generators switched off are dropped."""
    if not real_records:
        raise ValueError("real corpus is empty")
    if not fp_records:
        raise ValueError("fingerprint corpus is empty")
    if any(r.tag != "real" for r in real_records):
        raise ValueError("real corpus contains non-real records")
    _check_fakes(fp_records, FP_TAGS)
    keep_tags = {f"fp-{lvl}" for lvl in config.levels}
    kept = [r for r in fp_records if r.tag in keep_tags]
    if not kept:
        raise ValueError(f"no fingerprints left for enabled generators {sorted(keep_tags)}")
    expected = len(real_records) * len(keep_tags)
    if len(kept) != expected:
        warnings.warn(
            f"{len(kept)} fingerprints for {len(real_records)} real images; "
            f"expected {expected} (one per enabled generator)",
            stacklevel=3,
        )
    return Pool.from_records(real_records, config.domain), Pool.from_records(kept, config.domain)


def train_detector(
    model: DetectorModel,
    real_records: list[ImageRecord],
    fp_records: list[ImageRecord],
    config: RunConfig,
    epochs: int | None = None,
) -> TrainHistory:
    """Train on real images (label 0) against fingerprints (label 1)."""
    if model.domain != config.domain:
        raise DomainError(f"model domain {model.domain!r} but config asks for {config.domain!r}")
    real, fake = training_pools(real_records, fp_records, config)
    return train_on_pools(model, real, fake, config, epochs)


def train_on_pools(
    model: DetectorModel, real: Pool, fake: Pool, config: RunConfig, epochs: int | None = None
) -> TrainHistory:
    epochs = config.det_epochs if epochs is None else epochs
    rng = np.random.default_rng([config.seed, 202])
    opt = Adam(list(model.params.values()), lr=config.det_lr)
    policy = MixupPolicy(config.use_mixup, config.mixup_alpha)
    bs = config.batch_size
    n_batches = math.ceil((len(real) + len(fake)) / bs)
    hist = TrainHistory()
    for epoch in range(epochs):
        total, correct = 0.0, 0
        for _ in range(n_batches):
            batch = assemble_batch(real, fake, bs, rng, config.real_weight, config.sampler_mode)
            hist.provenance.update(batch.provenance)
            loss, ok = _step(model, opt, mixup_batch(batch, policy, rng))
            total += loss
            correct += ok
        hist.loss.append(total / n_batches)
        hist.accuracy.append(correct / (n_batches * bs))
        if not np.isfinite(hist.loss[-1]):
            raise FloatingPointError(f"detector loss diverged at epoch {epoch + 1}")
        log.info("detector epoch %d/%d loss %.4f acc %.3f", epoch + 1, epochs, hist.loss[-1], hist.accuracy[-1])
    return hist


def target_slots(batch_size: int, proportion: float) -> int:
    if not 0 < proportion < 1:
        raise ValueError(f"target proportion must lie in (0, 1), got {proportion}")
    return int(math.floor(proportion * batch_size + 0.5))


def fine_tune_transfer(
    model: DetectorModel,
    target_records: list[ImageRecord],
    real_records: list[ImageRecord],
    fp_records: list[ImageRecord],
    config: RunConfig,
    epochs: int | None = None,
) -> TrainHistory:
    """Adapt a trained detector to a new fake source.

    Every batch carries ``round(target_prop * batch_size)`` target fakes; the
    rest is assembled from the base corpora exactly as in training. One epoch
    covers the base corpora plus the target set once in expectation.
    """
    if not target_records:
        raise ValueError("target set is empty")
    n_target = target_slots(config.batch_size, config.target_prop)
    if model.domain != config.domain:
        raise DomainError(f"model domain {model.domain!r} but config asks for {config.domain!r}")
    real, fake = training_pools(real_records, fp_records, config)
    target = Pool.from_records(target_records, config.domain)
    epochs = config.finetune_epochs if epochs is None else epochs
    rng = np.random.default_rng([config.seed, 303])
    opt = Adam(list(model.params.values()), lr=config.det_lr)
    policy = MixupPolicy(config.use_mixup, config.mixup_alpha)
    bs = config.batch_size
    n_base = bs - n_target
    n_batches = math.ceil((len(real) + len(fake) + len(target)) / bs)
    hist = TrainHistory()
    for _ in range(epochs):
        total, correct = 0.0, 0
        for _ in range(n_batches):
            pick = rng.integers(len(target), size=n_target)
            tgt = LabeledBatch(target.inputs[pick], one_hot(np.full(n_target, FAKE)),
                               [target.tags[i] for i in pick])
            if n_base >= 2:
                base = assemble_batch(real, fake, n_base, rng, config.real_weight, config.sampler_mode)
                batch = LabeledBatch(
                    np.concatenate([base.samples, tgt.samples]),
                    np.concatenate([base.labels, tgt.labels]),
                    base.provenance + tgt.provenance,
                )
            else:
                batch = tgt
            hist.provenance.update(batch.provenance)
            loss, ok = _step(model, opt, mixup_batch(batch, policy, rng))
            total += loss
            correct += ok
        hist.loss.append(total / n_batches)
        hist.accuracy.append(correct / (n_batches * bs))
    return hist


# --- inference -------------------------------------------------------------


def predict_inputs(model: DetectorModel, inputs: np.ndarray, chunk: int = 1) -> np.ndarray:
    """Fake probability for model-ready inputs ``[N, S, S, C]``.

    The default evaluates one sample at a time so a score never depends on
    which other samples share its batch (BLAS rounding is position-dependent).
    """
    probs = np.empty(len(inputs), np.float64)
    with no_grad():
        for start in range(0, len(inputs), chunk):
            logits = model(Tensor(to_batch(inputs[start : start + chunk]))).data
            probs[start : start + chunk] = ops.softmax(logits.astype(np.float64))[:, FAKE]
    return probs


def predict(model: DetectorModel, images: np.ndarray, kind: str = "image") -> np.ndarray:
    """Per-sample fake probability in input order.

    ``kind="image"`` means raw pixels, converted to the model's domain here;
    ``"spectrum"`` or ``"pixel"`` declares already-prepared inputs, which must
    match the domain the model was trained on.
    """
    images = np.asarray(images, np.float32)
    if images.ndim == 3:
        images = images[None]
    if kind == "image":
        inputs = prepare_inputs(images, model.domain)
    elif kind in DOMAINS:
        if kind != model.domain:
            raise DomainError(f"{model.domain}-domain detector was given {kind} inputs")
        inputs = images
    else:
        raise DomainError(f"unknown input kind {kind!r}")
    return predict_inputs(model, inputs)


def predict_records(model: DetectorModel, records: list[ImageRecord]) -> np.ndarray:
    if not records:
        return np.zeros(0)
    return predict(model, np.stack([r.pixels for r in records]))
