"""Command line entry point: ``afgan <command> [flags]``.

Exit codes: 0 success, 2 usage error or unknown flag, 3 invariant violation
(bad config, bad checkpoint, malformed image, domain mismatch), 4 missing file.
Failures print exactly one line to stderr::

    afgan: error code=<n> kind=<usage|invariant|missing> msg=<text>
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from afgan import detector as det
from afgan import pipeline
from afgan.checkpoint import load_checkpoint, save_checkpoint
from afgan.config import RunConfig
from afgan.data import (
    FP_TAGS,
    IMAGE_SUFFIXES,
    ImageRecord,
    load_dataset,
    load_dir,
    load_image,
    save_records,
    split_dataset,
    synth_corpus,
    tag_for_dir,
)
from afgan.generator import AutoencoderModel, reconstruct_corpus
from afgan.metrics import format_report
from afgan.spectrum import log_magnitude_spectrum, radial_profile

EXIT_USAGE, EXIT_INVARIANT, EXIT_MISSING = 2, 3, 4
_KINDS = {EXIT_USAGE: "usage", EXIT_INVARIANT: "invariant", EXIT_MISSING: "missing"}

log = logging.getLogger("afgan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- helpers ---------------------------------------------------------------


def _config(args) -> RunConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in RunConfig.__dataclass_fields__:
            raise UsageError(f"--set: unknown config key {key!r}")
        overrides[key] = value
    text = Path(args.config).read_text() if args.config else ""
    text += "".join(f"{k}={v}\n" for k, v in overrides.items())
    if args.seed is not None:
        text += f"seed={args.seed}\n"
    return RunConfig.from_text(text, **getattr(args, "_overrides", {}))


def _require_dir(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"no such directory: {path}")
    return p


def _reals(path: str, side: int) -> list[ImageRecord]:
    root = _require_dir(path)
    sub = root / "real"
    recs = load_dir(sub if sub.is_dir() else root, "real", side)
    if not recs:
        raise ValueError(f"no real images found under {path}")
    return recs


def _fakes(path: str, side: int, default_tag: str = "external-fake") -> dict[str, list[ImageRecord]]:
    """``{source: records}`` from ``DIR/fake_*/`` or from a flat directory of images."""
    root = _require_dir(path)
    groups = {k: v for k, v in load_dataset(root, side).items() if k.startswith("fake_")}
    if groups:
        return groups
    tag = tag_for_dir(root.name) if root.name.startswith("fake_") else default_tag
    recs = load_dir(root, tag, side)
    if not recs:
        raise ValueError(f"no images found under {path}")
    return {root.name: recs}


def _write(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _load_detector(path: str, config: RunConfig | None = None) -> det.DetectorModel:
    expect = {"kind": "detector"}
    if config is not None:
        expect.update(domain=config.domain, side=str(config.side))
    return load_checkpoint(path, expect)


# --- commands --------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig) -> None:
    recs = synth_corpus(args.n, cfg.side, cfg.seed, cfg.channels)
    save_records(recs, Path(args.out) / "real", "." + args.format)
    log.info("wrote %d images to %s/real", len(recs), args.out)


def cmd_train_ae(args, cfg: RunConfig) -> None:
    reals = _reals(args.data, cfg.side)
    model = pipeline.train_generators(reals, cfg, (args.level,))[args.level]
    save_checkpoint(model, args.out)
    print(f"level={args.level} epochs={model.epochs_seen} final_loss={model.final_loss:.6f}")


def cmd_reconstruct(args, cfg: RunConfig) -> None:
    models: dict[str, AutoencoderModel] = {}
    for path in args.model:
        m = load_checkpoint(path, {"kind": "autoencoder", "side": str(cfg.side)})
        models[m.spec.level] = m
    reals = _reals(args.data, cfg.side)
    recs = reconstruct_corpus(models, reals)
    out = Path(args.out)
    for level in models:
        tag = f"fp-{level}" if level != "custom" else "external-fake"
        group = [r for r in recs if r.tag == tag]
        save_records(group, out / f"fake_{level}", "." + args.format)
    log.info("wrote %d reconstructions to %s", len(recs), out)


def cmd_spectrum(args, cfg: RunConfig) -> None:
    rec = load_image(args.input)
    spec = log_magnitude_spectrum(rec.pixels)
    Path(args.out).write_bytes(pipeline.spectrum_pgm(spec.data))
    if args.profile:
        prof = radial_profile(spec)
        _write(args.profile, "radius,value\n" + "".join(f"{r},{v:.6f}\n" for r, v in enumerate(prof)))


def _fingerprints(path: str, cfg: RunConfig) -> list[ImageRecord]:
    groups = _fakes(path, cfg.side, default_tag="fp-non")
    recs = [r for g in groups.values() for r in g]
    bad = sorted({r.tag for r in recs} - set(FP_TAGS))
    if bad:
        raise ValueError(f"fingerprint directory holds non-fingerprint sources {bad}; use fake_high/low/non")
    return recs


def cmd_train_detector(args, cfg: RunConfig) -> None:
    reals = _reals(args.real, cfg.side)
    fps = _fingerprints(args.fp, cfg)
    model = det.build_detector(cfg.domain, cfg.side, cfg.channels, cfg.seed)
    hist = det.train_detector(model, reals, fps, cfg)
    save_checkpoint(model, args.out)
    for i, (loss, acc) in enumerate(zip(hist.loss, hist.accuracy), 1):
        print(f"epoch={i} loss={loss:.6f} train_accuracy={acc:.4f}")


def cmd_finetune(args, cfg: RunConfig) -> None:
    model = _load_detector(args.model, cfg)
    target = [r for g in _fakes(args.target, cfg.side).values() for r in g]
    for r in target:
        r.tag = "external-fake"
    reals = _reals(args.real, cfg.side)
    fps = _fingerprints(args.fp, cfg)
    hist = det.fine_tune_transfer(model, target, reals, fps, cfg)
    save_checkpoint(model, args.out)
    for i, (loss, acc) in enumerate(zip(hist.loss, hist.accuracy), 1):
        print(f"epoch={i} loss={loss:.6f} train_accuracy={acc:.4f}")


def cmd_predict(args, cfg: RunConfig) -> None:
    expect = {"kind": "detector"}
    if args.domain:
        expect["domain"] = args.domain
    model = load_checkpoint(args.model, expect)
    root = _require_dir(args.input)
    paths = sorted(p for p in root.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ValueError(f"no images found under {args.input}")
    pixels = np.stack([load_image(p, "real", model.side).pixels for p in paths])
    probs = det.predict(model, pixels)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "fake_prob"])
    for p, prob in zip(paths, probs):
        w.writerow([p.relative_to(root).as_posix(), f"{prob:.6f}"])
    _write(args.out, buf.getvalue())


def cmd_eval(args, cfg: RunConfig) -> None:
    model = _load_detector(args.model)
    reals = _reals(args.real, model.side)
    fakes = _fakes(args.fake, model.side)
    _write(args.out, format_report(pipeline.score_sources(model, reals, fakes)))


def cmd_ablate(args, cfg: RunConfig) -> None:
    if args.data:
        reals = _reals(args.data, cfg.side)
    else:
        reals = synth_corpus(args.n, cfg.side, cfg.seed, cfg.channels)
    train, test = split_dataset(reals, (0.8, 0.2), cfg.seed)
    names = ["Ours"] + [pipeline.DROP_NAMES[d] for d in args.drop] if args.drop else None
    extra = _fakes(args.fake, cfg.side) if args.fake else None
    # ablation rows switch generators off individually, so the base run keeps all three
    base = cfg.replace(use_high=True, use_low=True, use_non=True)
    rows = pipeline.run_ablation(train, test, base, names, extra)
    _write(args.out, pipeline.format_ablation(rows))


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value RunConfig file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field")
    common.add_argument("--seed", type=int, help="shortcut for --set seed=N")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="afgan", description="Self-supervised GAN image detection at desk scale.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic real-image corpus")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True, help="dataset root; images go to OUT/real/")
    s.add_argument("--format", choices=("ppm", "png"), default="ppm")

    s = sub.add_parser("train-ae", parents=[common], help="train one fingerprint autoencoder")
    s.add_argument("--level", choices=("high", "low", "non"), required=True)
    s.add_argument("--data", required=True, help="directory of real images (or a root holding real/)")
    s.add_argument("--out", required=True)

    s = sub.add_parser("reconstruct", parents=[common], help="emit fingerprints with trained autoencoders")
    s.add_argument("--model", action="append", required=True, help="autoencoder checkpoint (repeatable)")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="writes OUT/fake_<level>/")
    s.add_argument("--format", choices=("ppm", "png"), default="ppm")

    s = sub.add_parser("spectrum", parents=[common], help="dump an image's 2D spectrum as PGM")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--profile", help="also write radius,value rows to this CSV")

    s = sub.add_parser("train-detector", parents=[common], help="train the real/fake detector")
    s.add_argument("--real", required=True)
    s.add_argument("--fp", required=True, help="root holding fake_high/, fake_low/, fake_non/")
    s.add_argument("--domain", choices=("spectrum", "pixel"))
    s.add_argument("--mixup", choices=("on", "off"))
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", required=True)

    s = sub.add_parser("finetune", parents=[common], help="adapt a detector to a new fake source")
    s.add_argument("--model", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--real", required=True)
    s.add_argument("--fp", required=True)
    s.add_argument("--prop", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", required=True)

    s = sub.add_parser("predict", parents=[common], help="score every image under a directory")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True, help="CSV with columns path,fake_prob")
    s.add_argument("--domain", choices=("spectrum", "pixel"), help="reject models trained on another domain")

    s = sub.add_parser("eval", parents=[common], help="accuracy / AP / AUROC per fake source")
    s.add_argument("--model", required=True)
    s.add_argument("--real", required=True)
    s.add_argument("--fake", required=True, help="root holding fake_*/ or one directory of fakes")
    s.add_argument("--out", required=True)

    s = sub.add_parser("ablate", parents=[common], help="train one detector per ablation switch")
    s.add_argument("--data", help="real images; a synthetic corpus is used when omitted")
    s.add_argument("--n", type=int, default=500, help="synthetic corpus size when --data is omitted")
    s.add_argument("--drop", action="append", choices=tuple(pipeline.DROP_NAMES), default=[],
                   help="run only the full pipeline and these ablations (repeatable)")
    s.add_argument("--fake", help="extra held-out fakes scored in every row")
    s.add_argument("--out", required=True)
    return p


_COMMANDS = {
    "synth": cmd_synth,
    "train-ae": cmd_train_ae,
    "reconstruct": cmd_reconstruct,
    "spectrum": cmd_spectrum,
    "train-detector": cmd_train_detector,
    "finetune": cmd_finetune,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def _flag_overrides(args) -> dict:
    out = {}
    if getattr(args, "domain", None) and args.command != "predict":
        out["use_frequency"] = args.domain == "spectrum"
    if getattr(args, "mixup", None):
        out["use_mixup"] = args.mixup == "on"
    if getattr(args, "prop", None) is not None:
        out["target_prop"] = args.prop
    if getattr(args, "epochs", None) is not None:
        key = "finetune_epochs" if args.command == "finetune" else "det_epochs"
        out[key] = args.epochs
    if args.command == "train-ae":
        # a single generator run must not trip the "G_high needs S % 64" check
        # when another level is requested
        out.update(use_high=args.level == "high", use_low=args.level == "low", use_non=args.level == "non")
    return out


def _fail(code: int, msg: str) -> int:
    msg = " ".join(str(msg).split())
    print(f"afgan: error code={code} kind={_KINDS[code]} msg={msg}", file=sys.stderr)
    return code


def run(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args._overrides = _flag_overrides(args)
        cfg = _config(args)
        _COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING, exc)
    except (ValueError, FloatingPointError) as exc:
        return _fail(EXIT_INVARIANT, exc)
    return 0


def main() -> None:
    sys.exit(run())
