"""Compare the numba and pure-numpy kernel backends.

Kernel rows call both implementations in one process. The "train step" row
runs one forward/backward/Adam step of each autoencoder in a fresh
interpreter per backend, since the backend flag is read at import time.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from afgan import _kernels, data

STEP = """
import time, numpy as np
from afgan.config import RunConfig
from afgan.data import synth_corpus
from afgan.generator import AutoencoderSpec, build_autoencoder, train_autoencoder
corpus = synth_corpus(16, 64, 0)
out = []
for level in ("high", "low", "non"):
    m = build_autoencoder(AutoencoderSpec(level), 0)
    train_autoencoder(m, corpus, RunConfig(), epochs=1)  # warm-up / JIT
    t = time.perf_counter()
    train_autoencoder(m, corpus, RunConfig(), epochs={reps})
    out.append(f"{{level}}={{(time.perf_counter() - t) / {reps} * 1e3:.1f}}")
print(" ".join(out))
"""


def best(fn, repeat: int) -> float:
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3


def kernel_rows(repeat: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(0)
    rows = []
    for label, shape, k, s in [
        ("im2col 16x3x66x66 k4 s2", (16, 3, 66, 66), 4, 2),
        ("im2col 16x8x66x66 k3 s1", (16, 8, 66, 66), 3, 1),
        ("im2col 16x64x10x10 k4 s2", (16, 64, 10, 10), 4, 2),
    ]:
        x = rng.random(shape, dtype=np.float32)
        rows.append((label, best(lambda: _kernels.im2col_numpy(x, k, k, s), repeat),
                     best(lambda: _kernels.im2col_numba(x, k, k, s), repeat)))
        cols = _kernels.im2col_numpy(x, k, k, s)
        rows.append((label.replace("im2col", "col2im"),
                     best(lambda: _kernels.col2im_numpy(cols, shape, k, k, s), repeat),
                     best(lambda: _kernels.col2im_numba(cols, shape, k, k, s), repeat)))
    # every row tagged Paeth (filter 4), the slowest predictor to undo
    body = rng.integers(0, 256, (256, 768), dtype=np.uint8)
    raw = np.concatenate([np.full((256, 1), 4, np.uint8), body], axis=1).ravel()
    rows.append(("png unfilter 256x256 paeth", best(lambda: data._unfilter_numpy(raw, 256, 768, 3), repeat),
                 best(lambda: data._unfilter(raw, 256, 768, 3), repeat)))
    return rows


def step_row(reps: int) -> tuple[str, str]:
    out = {}
    for name, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, AFGAN_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-c", STEP.format(reps=reps)], env=env,
                              capture_output=True, text=True, check=True)
        out[name] = proc.stdout.strip()
    return out["numpy"], out["numba"]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is unavailable or disabled; nothing to compare")
    print(f"{'kernel':30s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, t_np, t_nb in kernel_rows(args.repeat):
        print(f"{label:30s} {t_np:10.2f} {t_nb:10.2f} {t_np / t_nb:8.2f}")
    np_step, nb_step = step_row(args.repeat)
    print(f"\ntrain step ms per epoch of 16 images at 64px\n  numpy: {np_step}\n  numba: {nb_step}")


if __name__ == "__main__":
    main()
