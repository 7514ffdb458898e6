"""Labelled RFNet tensors synthesised from a class catalog.

Each example is a ``w*h`` window cut at a random position from a modulated
burst, so symbol timing and the phase of any frequency shift vary between
examples. An optional random carrier phase and AWGN are applied per example.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .rftensor import build_tensors
from .waveform import RRC_SPAN, OfdmConfig, PhyConfig, _segment_waveform

SC_SAMPLE_RATE_HZ = 250e3


@dataclass(frozen=True)
class DatasetSpec:
    w: int = 20
    h: int = 20
    n_per_class: int = 500
    snr_db: float = 20.0
    sample_rate_hz: float = SC_SAMPLE_RATE_HZ
    random_phase: bool = False
    seed: int = 0


def sample_windows(
    cfg: PhyConfig, count: int, n: int, spec: DatasetSpec, rng: np.random.Generator, chunk: int = 256
) -> np.ndarray:
    """``count`` complex windows of ``n`` samples from class ``cfg``.

    Windows are cut from long bursts, one per ``chunk`` windows, with a random
    gap of up to one symbol between them; they never overlap, so examples share
    no samples but cost one modulator call per chunk.
    """
    out = np.empty((count, n), dtype=np.complex128)
    sl = cfg.symbol_len
    guard = RRC_SPAN * sl
    stride = n + sl
    for lo in range(0, count, chunk):
        k = min(chunk, count - lo)
        L = -(-(k * stride + 2 * guard) // sl) * sl
        bits = rng.integers(0, 2, (L // sl) * cfg.bits_per_symbol, dtype=np.uint8)
        x = _segment_waveform(bits, cfg, L, spec.sample_rate_hz)
        offs = guard + stride * np.arange(k) + rng.integers(0, sl, k)
        out[lo:lo + k] = x[offs[:, None] + np.arange(n)]
    if spec.random_phase:
        out *= np.exp(2j * np.pi * rng.uniform(size=count))[:, None]
    if np.isfinite(spec.snr_db):
        # OFDM is transmitted at unit power; single-carrier windows are measured
        p = 1.0 if isinstance(cfg, OfdmConfig) else np.mean(np.abs(out) ** 2, axis=1, keepdims=True)
        sigma = np.sqrt(p / 10 ** (spec.snr_db / 10) / 2)
        out += sigma * (rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n)))
    return out


def make_dataset(configs, spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Balanced ``(x, y)`` with ``x`` of shape ``(n_classes * n_per_class, h, w, 2)``."""
    if spec.n_per_class < 1:
        raise ParameterError("n_per_class must be positive")
    xs, ys = [], []
    for label, cfg in enumerate(configs):
        rng = np.random.default_rng([spec.seed, label])
        win = sample_windows(cfg, spec.n_per_class, spec.w * spec.h, spec, rng)
        xs.append(build_tensors(win, spec.w, spec.h))
        ys.append(np.full(spec.n_per_class, label, dtype=np.int64))
    return np.concatenate(xs), np.concatenate(ys)
