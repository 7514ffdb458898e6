"""Line-buffer / window-buffer model of a pipelined 2-D convolution.

Samples enter one per tick in raster order. The line buffer holds ``f`` rows
of ``w`` samples (``f - 1`` complete lines plus the one being written); each
insertion shifts its column up and drops the oldest value. Once full, the
``f x f`` window buffer is loaded column by column and afterwards slides one
column per tick, producing one output window per tick.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputShapeError
from .fixed import FixedFormat, bias_accumulator, rescale, saturating_add
from .layers import _check_conv


@dataclass(frozen=True)
class StreamingResult:
    output: np.ndarray
    cycle_count: int
    line_fill_cycles: int  # insertions until the line buffer first holds f full rows
    window_fill_cycles: int


def conv_cycles(w: int, h: int, f: int) -> int:
    """Ticks for one layer: line fill + first window load + one per output position."""
    return f * w + f + (w - f + 1) * (h - f + 1)


def _window_float(win: np.ndarray, filters: np.ndarray, biases: np.ndarray) -> np.ndarray:
    _, f, _, depth = filters.shape
    acc = biases.astype(np.float64).copy()
    for i in range(f):
        for j in range(f):
            for d in range(depth):
                acc = acc + win[i, j, d] * filters[:, i, j, d]
    return acc


def _window_fixed(win: np.ndarray, filters: np.ndarray, biases: np.ndarray, fmt: FixedFormat) -> np.ndarray:
    _, f, _, depth = filters.shape
    acc = bias_accumulator(biases, fmt)
    for i in range(f):
        for j in range(f):
            for d in range(depth):
                acc = saturating_add(acc, np.int64(win[i, j, d]) * filters[:, i, j, d].astype(np.int64))
    return rescale(acc, fmt)


def streaming_conv(
    x: np.ndarray, filters: np.ndarray, biases: np.ndarray, fmt: FixedFormat | None = None
) -> StreamingResult:
    """Convolve ``x`` (h, w, depth) by streaming it through line and window buffers.

    With ``fmt`` set, ``x``/``filters``/``biases`` are int32 codes and the
    arithmetic matches :func:`conv2d_valid_fixed`; otherwise it matches
    :func:`conv2d_valid`.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise InputShapeError(f"streaming input must be (h, w, depth), got {x.shape}")
    ho, wo = _check_conv(x, filters, biases)
    c, f, _, depth = filters.shape
    if f < 2:
        raise InputShapeError("streaming convolution needs f >= 2")
    h, w, _ = x.shape

    dtype = np.int64 if fmt is not None else np.float64
    line = np.zeros((f, w, depth), dtype=dtype)
    window = np.zeros((f, f, depth), dtype=dtype)
    out = np.zeros((ho, wo, c), dtype=np.int32 if fmt is not None else np.float64)

    inserted = 0
    line_fill = None
    for r in range(h):
        for col in range(w):
            line[:-1, col] = line[1:, col]
            line[-1, col] = x[r, col]
            inserted += 1
            if line_fill is None and inserted == f * w:
                line_fill = inserted
            if r < f - 1:
                continue
            window[:, :-1] = window[:, 1:]
            window[:, -1] = line[:, col]
            if col < f - 1:
                continue
            if fmt is None:
                out[r - f + 1, col - f + 1] = _window_float(window, filters, biases)
            else:
                out[r - f + 1, col - f + 1] = _window_fixed(window, filters, biases, fmt)

    return StreamingResult(out, conv_cycles(w, h, f), line_fill, f)
