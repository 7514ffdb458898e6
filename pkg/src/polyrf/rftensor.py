"""I/Q window -> RFNet input tensor.

Sample ``s[offset + r*w + c]`` lands at row ``r``, column ``c``; depth 0 holds
the in-phase part and depth 1 the quadrature part. Rows are therefore ``w``
samples apart in time and columns one sample apart.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ParameterError
from .waveform import IQStream


@dataclass(frozen=True)
class RfTensor:
    data: np.ndarray  # (h, w, 2), indexed [row, column, depth]
    w: int
    h: int

    def __post_init__(self):
        if self.data.shape != (self.h, self.w, 2):
            raise ParameterError(f"tensor data shape {self.data.shape} != ({self.h}, {self.w}, 2)")

    def to_samples(self) -> np.ndarray:
        return self.data[..., 0].ravel() + 1j * self.data[..., 1].ravel()


def _window(samples: np.ndarray, w: int, h: int, offset: int) -> np.ndarray:
    if w < 1 or h < 1:
        raise ParameterError("w and h must be positive")
    if offset < 0 or samples.shape[-1] < offset + w * h:
        raise InsufficientDataError(
            f"need {offset + w * h} samples for a {h}x{w} tensor at offset {offset}, got {samples.shape[-1]}"
        )
    return samples[..., offset:offset + w * h]


def build_tensor(s: IQStream | np.ndarray, w: int, h: int, offset: int = 0) -> RfTensor:
    samples = s.samples if isinstance(s, IQStream) else np.asarray(s, dtype=np.complex128)
    win = _window(samples, w, h, offset).reshape(h, w)
    data = np.stack([win.real, win.imag], axis=-1)
    data.setflags(write=False)
    return RfTensor(data, w, h)


def build_tensors(windows: np.ndarray, w: int, h: int) -> np.ndarray:
    """Batch form: ``(n, >= w*h)`` complex windows -> ``(n, h, w, 2)`` float array."""
    win = _window(np.atleast_2d(windows), w, h, 0).reshape(-1, h, w)
    return np.stack([win.real, win.imag], axis=-1)
