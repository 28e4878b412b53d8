"""End-to-end steps shared by the CLI and the calibration runs."""

from __future__ import annotations

import logging

import numpy as np

from afgan import detector as det
from afgan.config import RunConfig
from afgan.data import ImageRecord
from afgan.generator import (
    AutoencoderModel,
    AutoencoderSpec,
    build_autoencoder,
    reconstruct_array,
    reconstruct_corpus,
    train_autoencoder,
)
from afgan.metrics import source_report

log = logging.getLogger(__name__)

# ablation rows: label -> config switches
ABLATIONS = {
    "Ours": {},
    "w/o G_high": {"use_high": False},
    "w/o G_low": {"use_low": False},
    "w/o G_non": {"use_non": False},
    "w/o Freq.": {"use_frequency": False},
    "w/o Mixup": {"use_mixup": False},
}
DROP_NAMES = {
    "high": "w/o G_high",
    "low": "w/o G_low",
    "non": "w/o G_non",
    "freq": "w/o Freq.",
    "mixup": "w/o Mixup",
}


def train_generators(
    reals: list[ImageRecord], config: RunConfig, levels: tuple[str, ...] | None = None
) -> dict[str, AutoencoderModel]:
    models = {}
    for level in levels or config.levels:
        model = build_autoencoder(AutoencoderSpec(level, config.side, config.channels), config.seed)
        train_autoencoder(model, reals, config)
        log.info("G_%s final loss %.5f", level, model.final_loss)
        models[level] = model
    return models


# the held-out "unseen generator" for transfer runs: a stride-1 four-layer
# autoencoder twice as wide as G_non, initialized and shuffled from its own seed
TARGET_WIDTH = 16
TARGET_SEED_OFFSET = 1000


def train_unseen_target(reals: list[ImageRecord], config: RunConfig) -> AutoencoderModel:
    cfg = config.replace(seed=config.seed + TARGET_SEED_OFFSET)
    spec = AutoencoderSpec("non", config.side, config.channels, width=TARGET_WIDTH)
    model = build_autoencoder(spec, cfg.seed)
    train_autoencoder(model, reals, cfg)
    return model


def target_records(model: AutoencoderModel, reals: list[ImageRecord]) -> list[ImageRecord]:
    """Reconstructions tagged ``external-fake``, as if from an outside generator."""
    recon = reconstruct_array(model, np.stack([r.pixels for r in reals]))
    return [ImageRecord(f"{r.id}@target", p, "external-fake", source=r.id) for r, p in zip(reals, recon)]


def score_sources(
    model: det.DetectorModel, reals: list[ImageRecord], fakes: dict[str, list[ImageRecord]]
) -> list[dict]:
    real_scores = det.predict_records(model, reals)
    fake_scores = {tag: det.predict_records(model, recs) for tag, recs in fakes.items() if recs}
    return source_report(real_scores, fake_scores)


def group_by_tag(records: list[ImageRecord]) -> dict[str, list[ImageRecord]]:
    out: dict[str, list[ImageRecord]] = {}
    for rec in records:
        out.setdefault(rec.tag, []).append(rec)
    return out


def ablation_configs(config: RunConfig, names: list[str] | None = None) -> list[tuple[str, RunConfig]]:
    names = list(ABLATIONS) if names is None else names
    return [(name, config.replace(**ABLATIONS[name])) for name in names]


def run_ablation(
    train_reals: list[ImageRecord],
    test_reals: list[ImageRecord],
    config: RunConfig,
    names: list[str] | None = None,
    extra_fakes: dict[str, list[ImageRecord]] | None = None,
) -> list[dict]:
    """Train one detector per configuration and score it on held-out data.

    Generators are trained once and shared; a configuration without a given
    generator simply never sees its fingerprints. Every row is scored against
    held-out fingerprints of all three generators plus ``extra_fakes``, and
    reports the mean over those sources.
    """
    runs = ablation_configs(config, names)
    models = train_generators(train_reals, config, ("high", "low", "non"))
    train_fp = reconstruct_corpus(models, train_reals)
    test_fakes = group_by_tag(reconstruct_corpus(models, test_reals))
    test_fakes.update(extra_fakes or {})
    rows = []
    for name, cfg in runs:
        model = det.build_detector(cfg.domain, cfg.side, cfg.channels, cfg.seed)
        det.train_detector(model, train_reals, train_fp, cfg)
        mean = score_sources(model, test_reals, test_fakes)[-1]
        rows.append({**mean, "configuration": name})
        log.info("%s: acc %.3f ap %.3f auroc %.3f", name, mean["accuracy"], mean["average_precision"], mean["auroc"])
    return rows


def format_ablation(rows: list[dict]) -> str:
    lines = ["configuration,n,accuracy,average_precision,auroc"]
    for r in rows:
        lines.append(
            f"{r['configuration']},{int(r['n'])},{r['accuracy']:.6f},{r['average_precision']:.6f},{r['auroc']:.6f}"
        )
    return "\n".join(lines) + "\n"


def spectrum_pgm(spec_data: np.ndarray) -> bytes:
    """8-bit binary PGM of the channel-averaged normalized spectrum."""
    gray = spec_data.mean(axis=2) if spec_data.ndim == 3 else spec_data
    img = np.clip(np.rint(gray * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()
