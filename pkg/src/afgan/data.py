"""Image records, PPM/PNG decoding, bilinear resize, synthetic corpora, splits."""

from __future__ import annotations

import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from afgan import _kernels

TAGS = ("real", "fp-high", "fp-low", "fp-non", "external-fake")
FP_TAGS = ("fp-high", "fp-low", "fp-non")
IMAGE_SUFFIXES = (".ppm", ".png")


class ImageFormatError(ValueError):
    """Malformed or unsupported image file; ``offset`` is the failing byte."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass
class ImageRecord:
    id: str
    pixels: np.ndarray  # [S, S, C] float32 in [0, 1]
    tag: str = "real"
    source: str | None = None  # id of the real image a reconstruction came from
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown source tag {self.tag!r}")
        px = self.pixels
        if px.ndim != 3 or px.shape[0] != px.shape[1]:
            raise ValueError(f"record {self.id}: pixels must be [S, S, C], got {px.shape}")
        if px.size and not (px.min() >= 0.0 and px.max() <= 1.0):
            raise ValueError(f"record {self.id}: pixel values outside [0, 1]")

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


# --- PPM -------------------------------------------------------------------

_WS = b" \t\r\n"


def _ppm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(buf):
        ch = buf[pos : pos + 1]
        if ch == b"#":
            nl = buf.find(b"\n", pos)
            pos = len(buf) if nl < 0 else nl + 1
        elif ch in _WS:
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and buf[pos : pos + 1] not in _WS and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("PPM header truncated", start)
    return buf[start:pos], pos


def decode_ppm(buf: bytes) -> np.ndarray:
    """Decode a binary P6 file with maxval 255 to ``uint8 [H, W, 3]``."""
    if buf[:2] != b"P6":
        raise ImageFormatError("not a binary PPM (expected magic P6)", 0)
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        tok, pos = _ppm_token(buf, pos)
        if not tok.isdigit():
            raise ImageFormatError(f"PPM {name} is not a decimal integer: {tok!r}", pos - len(tok))
        values.append(int(tok))
    width, height, maxval = values
    if maxval != 255:
        raise ImageFormatError(f"PPM maxval {maxval} unsupported (only 255)", pos - len(tok))
    if width < 1 or height < 1:
        raise ImageFormatError(f"PPM has empty extent {width}x{height}", pos)
    if pos >= len(buf) or buf[pos : pos + 1] not in _WS:
        raise ImageFormatError("PPM header must end with one whitespace byte", pos)
    pos += 1
    need = width * height * 3
    if len(buf) - pos < need:
        raise ImageFormatError(f"PPM payload truncated: need {need} bytes, have {len(buf) - pos}", len(buf))
    return np.frombuffer(buf, np.uint8, need, pos).reshape(height, width, 3).copy()


def encode_ppm(pixels: np.ndarray) -> bytes:
    arr = to_uint8(pixels)
    h, w = arr.shape[:2]
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    return b"P6\n%d %d\n255\n" % (w, h) + arr[:, :, :3].tobytes()


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    if pixels.dtype == np.uint8:
        return pixels
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


# --- PNG -------------------------------------------------------------------

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_PNG_CHANNELS = {0: 1, 2: 3, 6: 4}


def _unfilter_numpy(raw: np.ndarray, height: int, stride: int, bpp: int) -> np.ndarray:
    out = np.zeros((height, stride), np.uint8)
    prev = np.zeros(stride, np.int32)
    for y in range(height):
        base = y * (stride + 1)
        ftype = int(raw[base])
        line = raw[base + 1 : base + 1 + stride].astype(np.int32)
        cur = np.zeros(stride, np.int32)
        if ftype == 0:
            cur = line
        elif ftype == 2:
            cur = (line + prev) & 0xFF
        else:
            for x in range(stride):
                a = cur[x - bpp] if x >= bpp else 0
                b = prev[x]
                if ftype == 1:
                    cur[x] = (line[x] + a) & 0xFF
                elif ftype == 3:
                    cur[x] = (line[x] + ((a + b) >> 1)) & 0xFF
                elif ftype == 4:
                    c = prev[x - bpp] if x >= bpp else 0
                    p = a + b - c
                    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                    pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                    cur[x] = (line[x] + pred) & 0xFF
                else:
                    raise ValueError(f"row {y}: unknown filter type {ftype}")
        out[y] = cur
        prev = cur
    return out


if _kernels.HAVE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _unfilter_nb(raw, height, stride, bpp, out):  # pragma: no cover - compiled
        for y in range(height):
            base = y * (stride + 1)
            ftype = raw[base]
            if ftype > 4:
                return y
            for x in range(stride):
                v = np.int32(raw[base + 1 + x])
                a = np.int32(out[y, x - bpp]) if x >= bpp else np.int32(0)
                b = np.int32(out[y - 1, x]) if y > 0 else np.int32(0)
                c = np.int32(out[y - 1, x - bpp]) if (y > 0 and x >= bpp) else np.int32(0)
                if ftype == 1:
                    v += a
                elif ftype == 2:
                    v += b
                elif ftype == 3:
                    v += (a + b) >> 1
                elif ftype == 4:
                    p = a + b - c
                    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                    if pa <= pb and pa <= pc:
                        v += a
                    elif pb <= pc:
                        v += b
                    else:
                        v += c
                out[y, x] = v & 0xFF
        return -1

    def _unfilter(raw: np.ndarray, height: int, stride: int, bpp: int) -> np.ndarray:
        out = np.zeros((height, stride), np.uint8)
        bad = _unfilter_nb(raw, height, stride, bpp, out)
        if bad >= 0:
            raise ValueError(f"row {bad}: unknown filter type {raw[bad * (stride + 1)]}")
        return out

else:
    _unfilter = _unfilter_numpy


def decode_png(buf: bytes) -> np.ndarray:
    """Decode a non-interlaced 8-bit gray/RGB/RGBA PNG to ``uint8 [H, W, 3]``."""
    if buf[:8] != _PNG_SIG:
        raise ImageFormatError("not a PNG (bad signature)", 0)
    pos = 8
    header = None
    idat = []
    while True:
        if pos + 8 > len(buf):
            raise ImageFormatError("PNG truncated before IEND", pos)
        length, ctype = struct.unpack(">I4s", buf[pos : pos + 8])
        end = pos + 12 + length
        if end > len(buf):
            raise ImageFormatError(f"PNG chunk {ctype!r} truncated", pos)
        data = buf[pos + 8 : pos + 8 + length]
        (crc,) = struct.unpack(">I", buf[pos + 8 + length : end])
        if zlib.crc32(ctype + data) & 0xFFFFFFFF != crc:
            raise ImageFormatError(f"PNG chunk {ctype!r} CRC mismatch", pos)
        if ctype == b"IHDR":
            if length != 13:
                raise ImageFormatError("PNG IHDR has wrong length", pos)
            header = struct.unpack(">IIBBBBB", data)
            width, height, depth, color, _, _, interlace = header
            if depth != 8 or color not in _PNG_CHANNELS or interlace != 0:
                raise ImageFormatError(
                    f"PNG unsupported (depth={depth}, color type={color}, interlace={interlace})",
                    pos + 8,
                )
        elif ctype == b"IDAT":
            if header is None:
                raise ImageFormatError("PNG IDAT before IHDR", pos)
            idat.append(data)
        elif ctype == b"IEND":
            break
        pos = end
    if header is None or not idat:
        raise ImageFormatError("PNG missing IHDR or IDAT", pos)
    width, height, _, color, _, _, _ = header
    channels = _PNG_CHANNELS[color]
    stride = width * channels
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise ImageFormatError(f"PNG image data corrupt: {exc}", pos) from None
    if len(raw) < height * (stride + 1):
        raise ImageFormatError("PNG image data truncated", pos)
    try:
        rows = _unfilter(np.frombuffer(raw, np.uint8), height, stride, channels)
    except ValueError as exc:
        raise ImageFormatError(f"PNG {exc}", pos) from None
    img = rows.reshape(height, width, channels)
    if channels == 1:
        img = np.repeat(img, 3, axis=2)
    return np.ascontiguousarray(img[:, :, :3])


def encode_png(pixels: np.ndarray) -> bytes:
    arr = to_uint8(pixels)
    h, w = arr.shape[:2]
    raw = b"".join(b"\x00" + arr[y, :, :3].tobytes() for y in range(h))

    def chunk(ctype: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + ctype + data + struct.pack(">I", zlib.crc32(ctype + data))

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return _PNG_SIG + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b"")


# --- records and files -----------------------------------------------------


def load_image(path: str | Path, tag: str = "real", side: int | None = None) -> ImageRecord:
    """Read a P6 PPM or 8-bit PNG into a record with pixels scaled to [0, 1]."""
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] == b"P6":
        arr = decode_ppm(buf)
    elif buf[:8] == _PNG_SIG:
        arr = decode_png(buf)
    else:
        raise ImageFormatError(f"{path.name}: neither P6 PPM nor PNG", 0)
    pixels = arr.astype(np.float32) / np.float32(255.0)
    if side is not None and pixels.shape[:2] != (side, side):
        pixels = resize(pixels, side)
    return ImageRecord(path.stem, pixels, tag)


def save_image(pixels: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    data = encode_png(pixels) if path.suffix.lower() == ".png" else encode_ppm(pixels)
    path.write_bytes(data)


def safe_name(record_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", record_id)


def tag_for_dir(name: str) -> str:
    if name == "real":
        return "real"
    if name in ("fake_high", "fake_low", "fake_non"):
        return "fp-" + name[5:]
    if name.startswith("fake_"):
        return "external-fake"
    raise ValueError(f"directory {name!r} is neither real nor fake_*")


def load_dir(path: str | Path, tag: str = "real", side: int | None = None) -> list[ImageRecord]:
    files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return [load_image(p, tag, side) for p in files]


def load_dataset(root: str | Path, side: int | None = None) -> dict[str, list[ImageRecord]]:
    """Load ``root/{real,fake_*}/`` into ``{dirname: records}`` tagged by directory."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(root)
    out: dict[str, list[ImageRecord]] = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if sub.name == "real" or sub.name.startswith("fake_"):
            tag = tag_for_dir(sub.name)
            out[sub.name] = load_dir(sub, tag, side)
            for rec in out[sub.name]:
                rec.meta["dir"] = sub.name
    return out


def save_records(records: list[ImageRecord], directory: str | Path, suffix: str = ".ppm") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for rec in records:
        p = directory / (safe_name(rec.id) + suffix)
        save_image(rec.pixels, p)
        paths.append(p)
    return paths


# --- resize ----------------------------------------------------------------


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, (src - i0).astype(np.float32)


def resize(image: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resize of ``[H, W, C]`` to ``[side, side, C]`` (half-pixel centers)."""
    if side < 8:
        raise ValueError(f"resize target must be >= 8, got {side}")
    img = np.asarray(image, np.float32)
    h, w = img.shape[:2]
    if (h, w) == (side, side):
        return img.copy()
    r0, r1, fr = _axis_weights(h, side)
    c0, c1, fc = _axis_weights(w, side)
    fr = fr[:, None, None]
    fc = fc[None, :, None]
    rows = img[r0] * (1 - fr) + img[r1] * fr
    out = rows[:, c0] * (1 - fc) + rows[:, c1] * fc
    return np.clip(out, 0.0, 1.0)


# --- synthetic corpus ------------------------------------------------------


def _random_field(rng: np.random.Generator, side: int, exponent: float) -> np.ndarray:
    fy = np.fft.fftfreq(side)[:, None]
    fx = np.fft.rfftfreq(side)[None, :]
    f = np.sqrt(fy * fy + fx * fx)
    amp = 1.0 / np.maximum(f, 1.0 / side) ** exponent
    amp[0, 0] = 0.0
    spec = (rng.standard_normal(amp.shape) + 1j * rng.standard_normal(amp.shape)) * amp
    field_ = np.fft.irfft2(spec, s=(side, side))
    return field_ / (field_.std() + 1e-12)


def _coverage(sdf: np.ndarray) -> np.ndarray:
    # signed distance in pixels -> anti-aliased 1px edge
    return np.clip(0.5 - sdf, 0.0, 1.0)


def synth_image(rng: np.random.Generator, side: int, channels: int = 3) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) + 0.5
    base = rng.uniform(0.25, 0.75, channels)
    # linear gradient along a random direction
    theta = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(theta) * xx + np.sin(theta) * yy) / side - 0.5
    img = base[None, None, :] + ramp[:, :, None] * rng.uniform(-0.4, 0.4, channels)
    # smooth 1/f texture: a shared luminance field plus weak per-channel tint
    lum = _random_field(rng, side, rng.uniform(1.6, 2.4))
    img += lum[:, :, None] * rng.uniform(0.06, 0.14)
    for c in range(channels):
        img[:, :, c] += _random_field(rng, side, 2.2) * 0.03
    for _ in range(int(rng.integers(2, 7))):
        color = rng.uniform(0.05, 0.95, channels)
        alpha = rng.uniform(0.5, 1.0)
        cy, cx = rng.uniform(0, side, 2)
        ry, rx = rng.uniform(side / 16, side / 3, 2)
        if rng.random() < 0.5:
            rho = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
            sdf = (rho - 1.0) * min(rx, ry)
        else:
            sdf = np.maximum(np.abs(yy - cy) - ry, np.abs(xx - cx) - rx)
        cov = (_coverage(sdf) * alpha)[:, :, None]
        img = img * (1 - cov) + color[None, None, :] * cov
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synth_corpus(n: int, side: int, seed: int, channels: int = 3) -> list[ImageRecord]:
    """Procedural natural-looking images tagged ``real``.

    Image ``i`` depends only on ``(seed, i)``, so a longer corpus extends a
    shorter one with the same seed.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return [
        ImageRecord(f"synth-{seed}-{i:05d}", synth_image(np.random.default_rng([seed, i]), side, channels))
        for i in range(n)
    ]


# --- splits ----------------------------------------------------------------


def split_dataset(records: list, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> tuple[list, ...]:
    """Shuffle and cut ``records`` into len(fractions) disjoint parts."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.ndim != 1 or (fr < 0).any() or abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must be nonnegative and sum to 1, got {tuple(fractions)}")
    n = len(records)
    order = np.random.default_rng(seed).permutation(n)
    cuts = np.round(np.cumsum(fr) * n).astype(int)
    cuts[-1] = n
    parts, start = [], 0
    for stop in cuts:
        parts.append([records[i] for i in order[start:stop]])
        start = stop
    return tuple(parts)
