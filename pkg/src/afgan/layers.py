"""Plain conv-stack plumbing shared by the autoencoders and the detector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from afgan import ops
from afgan.tensor import Tensor


@dataclass(frozen=True)
class ConvLayer:
    kind: str  # "conv" or "deconv"
    cin: int
    cout: int
    kernel: int
    stride: int
    pad: int
    relu: bool = True

    def weight_shape(self) -> tuple[int, int, int, int]:
        if self.kind == "conv":
            return (self.cout, self.cin, self.kernel, self.kernel)
        return (self.cin, self.cout, self.kernel, self.kernel)

    def fan_in(self) -> int:
        taps = self.kernel * self.kernel
        if self.kind == "deconv":
            # each output pixel sees kernel/stride taps per axis
            taps = max(1, taps // (self.stride * self.stride))
        return self.cin * taps

    def out_side(self, side: int) -> int:
        if self.kind == "conv":
            return (side + 2 * self.pad - self.kernel) // self.stride + 1
        return (side - 1) * self.stride - 2 * self.pad + self.kernel


def down(cin: int, cout: int, relu: bool = True) -> ConvLayer:
    return ConvLayer("conv", cin, cout, 4, 2, 1, relu)


def up(cin: int, cout: int, relu: bool = True) -> ConvLayer:
    return ConvLayer("deconv", cin, cout, 4, 2, 1, relu)


def same(cin: int, cout: int, relu: bool = True) -> ConvLayer:
    return ConvLayer("conv", cin, cout, 3, 1, 1, relu)


def kaiming_uniform(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def init_stack(layers: list[ConvLayer], rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    for i, layer in enumerate(layers):
        w = kaiming_uniform(layer.weight_shape(), layer.fan_in(), rng)
        params[f"layer{i}.weight"] = Tensor(w, requires_grad=True)
        params[f"layer{i}.bias"] = Tensor(np.zeros(layer.cout, np.float32), requires_grad=True)
    return params


def run_stack(layers: list[ConvLayer], params: dict[str, Tensor], x: Tensor) -> Tensor:
    for i, layer in enumerate(layers):
        w, b = params[f"layer{i}.weight"], params[f"layer{i}.bias"]
        if layer.kind == "conv":
            x = ops.conv2d(x, w, b, layer.stride, layer.pad)
        else:
            x = ops.conv2d_transpose(x, w, b, layer.stride, layer.pad)
        if layer.relu:
            x = ops.relu(x)
    return x
