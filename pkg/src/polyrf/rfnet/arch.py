"""RFNet architecture descriptor and parameter containers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import InputShapeError, ParameterError


@dataclass(frozen=True)
class RfnetArch:
    """``m`` conv layers of ``c[i]`` ``f``x``f`` filters, ``k`` hidden dense layers, softmax output.

    The output affine layer is always present, so ``k`` counts hidden layers
    only. ``m == 0`` gives a dense-only network on the flattened I/Q tensor,
    used as the baseline that RFNet is compared against.
    """

    m: int = 1
    c: tuple[int, ...] = (25,)
    f: int = 3
    k: int = 0
    d: tuple[int, ...] = ()
    input_w: int = 20
    input_h: int = 20
    n_classes: int = 18

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(int(v) for v in self.c))
        object.__setattr__(self, "d", tuple(int(v) for v in self.d))
        if self.m < 0 or len(self.c) != self.m:
            raise ParameterError(f"need one filter count per conv layer (m={self.m}, c={self.c})")
        if self.k < 0 or len(self.d) != self.k:
            raise ParameterError(f"need one neuron count per dense layer (k={self.k}, d={self.d})")
        if self.n_classes < 2:
            raise ParameterError("n_classes must be >= 2")
        if any(v < 1 for v in self.c + self.d) or self.f < 1:
            raise ParameterError("layer sizes must be positive")
        shrink = self.m * (self.f - 1)
        if self.input_w - shrink < 1 or self.input_h - shrink < 1:
            raise ParameterError(
                f"{self.m} valid {self.f}x{self.f} convolutions do not fit a {self.input_h}x{self.input_w} input"
            )

    @classmethod
    def dense_baseline(cls, hidden: Sequence[int], input_w: int, input_h: int, n_classes: int) -> "RfnetArch":
        return cls(m=0, c=(), f=1, k=len(hidden), d=tuple(hidden), input_w=input_w, input_h=input_h, n_classes=n_classes)

    @property
    def conv_shapes(self) -> list[tuple[int, int, int, int]]:
        """Filter shapes ``(c_out, f, f, depth_in)`` per conv layer."""
        shapes, depth = [], 2
        for ci in self.c:
            shapes.append((ci, self.f, self.f, depth))
            depth = ci
        return shapes

    def conv_output_shape(self, layer: int) -> tuple[int, int, int]:
        shrink = (layer + 1) * (self.f - 1)
        return self.input_h - shrink, self.input_w - shrink, self.c[layer]

    @property
    def feature_size(self) -> int:
        if self.m == 0:
            return self.input_h * self.input_w * 2
        return int(np.prod(self.conv_output_shape(self.m - 1)))

    @property
    def dense_shapes(self) -> list[tuple[int, int]]:
        """Weight shapes ``(n_out, n_in)`` for hidden layers and the output layer."""
        sizes = [self.feature_size, *self.d, self.n_classes]
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]

    def n_params(self) -> int:
        total = sum(int(np.prod(s)) + s[0] for s in self.conv_shapes)
        return total + sum(o * i + o for o, i in self.dense_shapes)

    def to_dict(self) -> dict:
        return {
            "m": self.m, "c": list(self.c), "f": self.f, "k": self.k, "d": list(self.d),
            "input_w": self.input_w, "input_h": self.input_h, "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RfnetArch":
        return cls(d["m"], tuple(d["c"]), d["f"], d["k"], tuple(d["d"]), d["input_w"], d["input_h"], d["n_classes"])


def linear_baseline_params(
    n_samples: int, f: int = 3, c: Sequence[int] = (256, 80), d: Sequence[int] = (256,), n_classes: int = 18
) -> int:
    """Parameter count of a 1-D conv net over ``n_samples`` I/Q samples (1 x f filters, valid padding)."""
    total, depth, length = 0, 2, n_samples
    for ci in c:
        total += ci * f * depth + ci
        depth, length = ci, length - (f - 1)
    sizes = [length * depth, *d, n_classes]
    return total + sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))


@dataclass(frozen=True)
class FloatParams:
    conv: tuple[tuple[np.ndarray, np.ndarray], ...]
    dense: tuple[tuple[np.ndarray, np.ndarray], ...]

    def arrays(self) -> list[np.ndarray]:
        """Flat list in file order: per conv layer filters, bias; per dense layer weights, bias."""
        out = []
        for w, b in self.conv + self.dense:
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arch: RfnetArch, arrays: Sequence[np.ndarray]) -> "FloatParams":
        arrays = list(arrays)
        nconv = len(arch.conv_shapes)
        pairs = [(arrays[2 * i], arrays[2 * i + 1]) for i in range(len(arrays) // 2)]
        p = cls(tuple(pairs[:nconv]), tuple(pairs[nconv:]))
        p.check(arch)
        return p

    def check(self, arch: RfnetArch) -> None:
        if len(self.conv) != len(arch.conv_shapes) or len(self.dense) != len(arch.dense_shapes):
            raise InputShapeError("layer count does not match the architecture")
        for (w, b), s in zip(self.conv, arch.conv_shapes):
            if w.shape != s or b.shape != (s[0],):
                raise InputShapeError(f"conv filter {w.shape}/{b.shape} != {s}")
        for (w, b), s in zip(self.dense, arch.dense_shapes):
            if w.shape != s or b.shape != (s[0],):
                raise InputShapeError(f"dense weights {w.shape}/{b.shape} != {s}")

    def weight_norm(self) -> float:
        """Euclidean norm over filters and dense weights (biases excluded)."""
        return float(np.sqrt(sum(np.sum(w ** 2) for w, _ in self.conv + self.dense)))


def init_params(arch: RfnetArch, seed: int = 0) -> FloatParams:
    """He-uniform weights scaled by fan-in, zero biases."""
    rng = np.random.default_rng(seed)
    conv = []
    for s in arch.conv_shapes:
        lim = np.sqrt(6.0 / (s[1] * s[2] * s[3]))
        conv.append((rng.uniform(-lim, lim, s), np.zeros(s[0])))
    dense = []
    for o, i in arch.dense_shapes:
        lim = np.sqrt(6.0 / i)
        dense.append((rng.uniform(-lim, lim, (o, i)), np.zeros(o)))
    return FloatParams(tuple(conv), tuple(dense))


@dataclass(frozen=True)
class RfnetModel:
    """Architecture plus either float or quantized parameters."""

    arch: RfnetArch
    params: object  # FloatParams | QuantizedParams
    meta: dict = field(default_factory=dict, compare=False)
