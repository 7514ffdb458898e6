"""32-bit fixed-point quantization and integer inference.

Values are stored as int32 with ``frac_bits`` fractional bits. Multiply-accumulate
runs in int64 starting from the bias (pre-shifted to the product scale),
saturating instead of wrapping; one round-half-away-from-zero rescale per
output element brings the sum back to storage format.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputShapeError
from .arch import FloatParams, RfnetArch
from .layers import ClassPrediction, _as_batch, _check_conv, softmax

_I64_MAX = np.iinfo(np.int64).max
_I64_MIN = np.iinfo(np.int64).min


@dataclass(frozen=True)
class FixedFormat:
    total_bits: int = 32
    int_bits: int = 10

    @property
    def frac_bits(self) -> int:
        return self.total_bits - self.int_bits

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def qmin(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def qmax(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.qmin / self.scale

    @property
    def max_value(self) -> float:
        return self.qmax / self.scale

    @property
    def resolution(self) -> float:
        return 1.0 / self.scale

    @property
    def name(self) -> str:
        return f"fixed({self.total_bits},{self.int_bits})"

    @classmethod
    def parse(cls, name: str) -> "FixedFormat":
        inner = name.strip()[len("fixed("):-1]
        total, integer = (int(v) for v in inner.split(","))
        return cls(total, integer)


Q32_10 = FixedFormat()


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_array(x, fmt: FixedFormat = Q32_10) -> np.ndarray:
    """Saturating round-to-nearest (half away from zero) conversion to int32 codes."""
    x = np.clip(np.asarray(x, dtype=np.float64), fmt.min_value, fmt.max_value)
    return np.clip(_round_half_away(x * fmt.scale), fmt.qmin, fmt.qmax).astype(np.int32)


def dequantize_array(q, fmt: FixedFormat = Q32_10) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) / fmt.scale


@dataclass(frozen=True)
class QuantizedParams:
    conv: tuple[tuple[np.ndarray, np.ndarray], ...]
    dense: tuple[tuple[np.ndarray, np.ndarray], ...]
    fmt: FixedFormat = Q32_10

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in self.conv + self.dense:
            out += [w, b]
        return out

    def dequantize(self) -> FloatParams:
        f = self.fmt
        return FloatParams(
            tuple((dequantize_array(w, f), dequantize_array(b, f)) for w, b in self.conv),
            tuple((dequantize_array(w, f), dequantize_array(b, f)) for w, b in self.dense),
        )


def quantize(p: FloatParams | QuantizedParams, fmt: FixedFormat = Q32_10) -> QuantizedParams:
    if isinstance(p, QuantizedParams):
        if p.fmt == fmt:
            return p
        p = p.dequantize()
    return QuantizedParams(
        tuple((quantize_array(w, fmt), quantize_array(b, fmt)) for w, b in p.conv),
        tuple((quantize_array(w, fmt), quantize_array(b, fmt)) for w, b in p.dense),
        fmt,
    )


def saturating_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """int64 addition that clamps at the int64 limits instead of wrapping."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    with np.errstate(over="ignore"):
        s = a + b
    over = ((a ^ s) & (b ^ s)) < 0
    if np.any(over):
        s = np.where(over, np.where(a < 0, _I64_MIN, _I64_MAX), s)
    return s


def rescale(acc: np.ndarray, fmt: FixedFormat = Q32_10) -> np.ndarray:
    """Product-scale int64 accumulator -> storage int32, rounding half away from zero."""
    acc = np.asarray(acc, dtype=np.int64)
    half = 1 << (fmt.frac_bits - 1)
    mag = np.minimum(np.abs(np.maximum(acc, -_I64_MAX)), _I64_MAX - half)
    q = np.where(acc < 0, -((mag + half) >> fmt.frac_bits), (mag + half) >> fmt.frac_bits)
    return np.clip(q, fmt.qmin, fmt.qmax).astype(np.int32)


def bias_accumulator(b: np.ndarray, fmt: FixedFormat = Q32_10) -> np.ndarray:
    return np.asarray(b, dtype=np.int64) << fmt.frac_bits


def conv2d_valid_fixed(x: np.ndarray, filters: np.ndarray, biases: np.ndarray, fmt: FixedFormat = Q32_10) -> np.ndarray:
    """Integer counterpart of :func:`conv2d_valid` with the same term order."""
    ho, wo = _check_conv(x, filters, biases)
    _, f, _, depth = filters.shape
    x = np.asarray(x, dtype=np.int64)
    filters = np.asarray(filters, dtype=np.int64)
    acc = np.broadcast_to(bias_accumulator(biases, fmt), x.shape[:-3] + (ho, wo, filters.shape[0])).copy()
    for i in range(f):
        for j in range(f):
            for d in range(depth):
                acc = saturating_add(acc, x[..., i:i + ho, j:j + wo, d, None] * filters[:, i, j, d])
    return rescale(acc, fmt)


def dense_fixed(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, fmt: FixedFormat = Q32_10) -> np.ndarray:
    if x.shape[-1] != weights.shape[1]:
        raise InputShapeError(f"cannot apply {weights.shape} weights to input {x.shape}")
    x = np.asarray(x, dtype=np.int64)
    wt = np.asarray(weights, dtype=np.int64).T
    acc = np.broadcast_to(bias_accumulator(bias, fmt), x.shape[:-1] + (weights.shape[0],)).copy()
    for k in range(weights.shape[1]):
        acc = saturating_add(acc, x[..., k, None] * wt[k])
    return rescale(acc, fmt)


def logits_fixed(arch: RfnetArch, params: QuantizedParams, t) -> np.ndarray:
    """Integer forward pass; returns dequantized logits (single tensor or batch)."""
    fmt = params.fmt
    a = quantize_array(_as_batch(arch, t), fmt)
    for w, b in params.conv:
        a = np.maximum(conv2d_valid_fixed(a, w, b, fmt), 0)
    a = a.reshape(a.shape[:-3] + (-1,))
    for w, b in params.dense[:-1]:
        a = np.maximum(dense_fixed(a, w, b, fmt), 0)
    w, b = params.dense[-1]
    return dequantize_array(dense_fixed(a, w, b, fmt), fmt)


def forward_fixed(arch: RfnetArch, params: QuantizedParams, t, fmt: FixedFormat | None = None) -> ClassPrediction:
    if fmt is not None and fmt != params.fmt:
        params = quantize(params, fmt)
    return ClassPrediction.from_probs(softmax(logits_fixed(arch, params, t)))


def predict_fixed(arch: RfnetArch, params: QuantizedParams, x: np.ndarray, batch: int = 256) -> np.ndarray:
    x = _as_batch(arch, x)
    out = [np.argmax(logits_fixed(arch, params, x[i:i + batch]), axis=1) for i in range(0, len(x), batch)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
