"""Floating-point RFNet layers and inference."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputShapeError
from .arch import FloatParams, RfnetArch


@dataclass(frozen=True)
class ClassPrediction:
    probs: np.ndarray
    argmax: int

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> "ClassPrediction":
        return cls(probs, int(np.argmax(probs)))  # np.argmax keeps the lowest index on ties


def _check_conv(x: np.ndarray, filters: np.ndarray, biases: np.ndarray) -> tuple[int, int]:
    if filters.ndim != 4 or filters.shape[1] != filters.shape[2]:
        raise InputShapeError(f"filters must be (c, f, f, depth), got {filters.shape}")
    c, f, _, depth = filters.shape
    if x.shape[-1] != depth:
        raise InputShapeError(f"input depth {x.shape[-1]} != filter depth {depth}")
    if biases.shape != (c,):
        raise InputShapeError(f"bias shape {biases.shape} != ({c},)")
    h, w = x.shape[-3], x.shape[-2]
    if f > min(h, w):
        raise InputShapeError(f"{f}x{f} filter larger than {h}x{w} input")
    return h - f + 1, w - f + 1


def conv2d_valid(x: np.ndarray, filters: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """Valid cross-correlation, ``(..., h, w, depth) -> (..., h-f+1, w-f+1, c)``.

    Each output starts at its bias and accumulates the window terms in
    (row, column, depth) order; the streaming engine uses the same order.
    """
    ho, wo = _check_conv(x, filters, biases)
    _, f, _, depth = filters.shape
    acc = np.broadcast_to(biases.astype(np.float64), x.shape[:-3] + (ho, wo, filters.shape[0])).copy()
    for i in range(f):
        for j in range(f):
            for d in range(depth):
                acc = acc + x[..., i:i + ho, j:j + wo, d, None] * filters[:, i, j, d]
    return acc


def relu(x):
    return np.maximum(x, 0)


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """``weights @ x + bias``; ``x`` may carry leading batch axes."""
    if weights.ndim != 2 or x.shape[-1] != weights.shape[1] or bias.shape != (weights.shape[0],):
        raise InputShapeError(f"cannot apply {weights.shape} weights to input {x.shape}")
    return x @ weights.T + bias


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _as_batch(arch: RfnetArch, x) -> np.ndarray:
    data = getattr(x, "data", x)
    data = np.asarray(data, dtype=np.float64)
    if data.shape[-3:] != (arch.input_h, arch.input_w, 2):
        raise InputShapeError(f"input {data.shape[-3:]} does not match arch {(arch.input_h, arch.input_w, 2)}")
    return data


def logits_float(arch: RfnetArch, params: FloatParams, x) -> np.ndarray:
    """Logits for one ``(h, w, 2)`` tensor or a batch ``(n, h, w, 2)``."""
    a = _as_batch(arch, x)
    for w, b in params.conv:
        a = relu(conv2d_valid(a, w, b))
    a = a.reshape(a.shape[:-3] + (-1,))
    for w, b in params.dense[:-1]:
        a = relu(dense_forward(a, w, b))
    w, b = params.dense[-1]
    return dense_forward(a, w, b)


def forward_float(arch: RfnetArch, params: FloatParams, t) -> ClassPrediction:
    return ClassPrediction.from_probs(softmax(logits_float(arch, params, t)))


def predict_float(arch: RfnetArch, params: FloatParams, x: np.ndarray, batch: int = 512) -> np.ndarray:
    """Argmax labels for a batch of tensors."""
    from .train import forward_batch

    x = _as_batch(arch, x)
    out = [np.argmax(forward_batch(arch, params, x[i:i + batch])[0], axis=1) for i in range(0, len(x), batch)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
