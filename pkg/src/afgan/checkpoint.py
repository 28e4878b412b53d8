"""AFGN checkpoint files.

Layout, all integers little-endian::

    b"AFGN"  u32 version=1  u32 count
    count x ( u16 name_len, name utf-8, u8 rank, rank x u32 extent, f32 payload )

Model metadata (kind, input domain, side, ...) travels as rank-0 entries named
``@key=value`` whose payload is a single 0.0, so any reader of the plain tensor
format can still walk the file.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from afgan.detector import DetectorModel, build_detector
from afgan.generator import AutoencoderModel, AutoencoderSpec, build_autoencoder

MAGIC = b"AFGN"
VERSION = 1


class CheckpointError(ValueError):
    """The file is not a valid checkpoint or does not match the requested model."""


def encode_tensors(entries: list[tuple[str, np.ndarray]]) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        arr = np.asarray(arr, dtype="<f4")
        if arr.ndim > 0xFF:
            raise CheckpointError(f"tensor {name} has rank {arr.ndim}")
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def decode_tensors(buf: bytes) -> list[tuple[str, np.ndarray]]:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated checkpoint: {what} needs {n} bytes at offset {pos}")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic: not an AFGN checkpoint")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"tensor name is not UTF-8 near offset {pos}") from exc
        (rank,) = struct.unpack("<B", take(1, "rank"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "extents"))
        size = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(take(4 * size, f"payload of {name}"), dtype="<f4").reshape(shape)
        entries.append((name, data.astype(np.float32)))
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after the last tensor")
    return entries


def _meta_entries(meta: dict[str, str]) -> list[tuple[str, np.ndarray]]:
    return [(f"@{k}={v}", np.zeros((), np.float32)) for k, v in meta.items()]


def model_meta(model) -> dict[str, str]:
    if isinstance(model, AutoencoderModel):
        s = model.spec
        return {
            "kind": "autoencoder",
            "level": s.level,
            "side": str(s.side),
            "channels": str(s.channels),
            "width": str(s.hidden),
            "depth": str(s.t),
        }
    if isinstance(model, DetectorModel):
        return {
            "kind": "detector",
            "domain": model.domain,
            "side": str(model.side),
            "channels": str(model.channels),
            "widths": ",".join(map(str, model.widths)),
        }
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def save_checkpoint(model, path: str | os.PathLike) -> None:
    """Write ``model`` atomically; parameters are stored in insertion order."""
    entries = _meta_entries(model_meta(model))
    entries += [(name, t.data) for name, t in model.params.items()]
    blob = encode_tensors(entries)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _split(entries):
    meta, params = {}, {}
    for name, arr in entries:
        if name.startswith("@"):
            key, sep, value = name[1:].partition("=")
            if not sep:
                raise CheckpointError(f"malformed metadata entry {name!r}")
            meta[key] = value
        else:
            params[name] = arr
    return meta, params


def _int(meta: dict[str, str], key: str) -> int:
    try:
        return int(meta[key])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint metadata lacks a valid {key!r}") from exc


def _skeleton(meta: dict[str, str]):
    kind = meta.get("kind")
    if kind == "autoencoder":
        level = meta.get("level", "")
        try:
            spec = AutoencoderSpec(
                level,
                side=_int(meta, "side"),
                channels=_int(meta, "channels"),
                width=_int(meta, "width") or None,
                depth=_int(meta, "depth") if level == "custom" else None,
            )
        except ValueError as exc:
            raise CheckpointError(f"invalid autoencoder metadata: {exc}") from exc
        return build_autoencoder(spec)
    if kind == "detector":
        widths = tuple(int(w) for w in meta.get("widths", "").split(",") if w)
        try:
            return build_detector(meta.get("domain", ""), _int(meta, "side"), _int(meta, "channels"), 0, widths)
        except ValueError as exc:
            raise CheckpointError(f"invalid detector metadata: {exc}") from exc
    raise CheckpointError(f"unknown model kind {kind!r}")


def load_checkpoint(path: str | os.PathLike, expect: dict[str, str] | None = None):
    """Rebuild the model stored at ``path``.

    ``expect`` pins metadata fields, e.g. ``{"kind": "detector", "domain": "spectrum"}``;
    any disagreement is rejected before parameters are touched.
    """
    meta, params = _split(decode_tensors(Path(path).read_bytes()))
    for key, want in (expect or {}).items():
        if meta.get(key) != want:
            raise CheckpointError(f"checkpoint {key} is {meta.get(key)!r}, expected {want!r}")
    model = _skeleton(meta)
    if set(params) != set(model.params):
        missing = sorted(set(model.params) - set(params))
        extra = sorted(set(params) - set(model.params))
        raise CheckpointError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
    for name, t in model.params.items():
        if params[name].shape != t.shape:
            raise CheckpointError(f"{name}: stored shape {params[name].shape} but model declares {t.shape}")
        t.data = params[name].copy()
    return model
