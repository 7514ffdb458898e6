"""Real-time feasibility arithmetic for buffer-by-buffer inference.

Symbols: ``S`` sample rate (samples/s), ``B`` buffer size (samples), and the
per-buffer latencies ``T_buf`` (DMA fill), ``T_i`` (input transfer), ``T_cn``
(network) and ``T_o`` (output read). Buffers are processed ``S / (2B)`` times
per second, so the pipeline keeps up when ``(T_buf + T_i + T_cn + T_o) * S / (2B) < 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError
from .rfnet.arch import RfnetArch
from .rfnet.streaming import conv_cycles


@dataclass(frozen=True)
class BudgetInputs:
    sample_rate_hz: float
    buffer_samples: int
    t_buf_s: float = 0.0
    t_in_s: float = 0.0
    t_cn_s: float = 0.0
    t_out_s: float = 0.0
    switch_time_s: float | None = None

    def __post_init__(self):
        if self.buffer_samples < 1:
            raise ParameterError("buffer_samples must be >= 1")
        vals = (self.sample_rate_hz, self.t_buf_s, self.t_in_s, self.t_cn_s, self.t_out_s)
        if any(v < 0 for v in vals) or (self.switch_time_s is not None and self.switch_time_s < 0):
            raise ParameterError("budget quantities must be non-negative")

    @property
    def total_latency_s(self) -> float:
        return self.t_buf_s + self.t_in_s + self.t_cn_s + self.t_out_s


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    load: float

    @property
    def slack(self) -> float:
        return 1.0 - self.load


def _floor_exactish(x: float) -> int:
    # 5e6 * 0.016 / 2 must count as exactly 40000, not 40000.000000000004
    r = round(x)
    return r if math.isclose(x, r, rel_tol=1e-12, abs_tol=1e-12) else math.floor(x)


def is_realtime_feasible(b: BudgetInputs) -> Feasibility:
    load = b.total_latency_s * b.sample_rate_hz / (2 * b.buffer_samples)
    if math.isclose(load, 1.0, rel_tol=1e-12):
        load = 1.0
    return Feasibility(load < 1.0, load)


def min_buffer_size(sample_rate_hz: float, t_cn_s: float) -> int:
    """Smallest integer ``B`` with ``B > S * T_cn / 2``."""
    if sample_rate_hz <= 0 or t_cn_s < 0:
        raise ParameterError("sample rate must be positive and latency non-negative")
    return _floor_exactish(sample_rate_hz * t_cn_s / 2) + 1


def min_switch_time(buffer_samples: int, sample_rate_hz: float) -> float:
    """Shortest switching interval one inference per buffer can track: ``B / S`` seconds."""
    if buffer_samples <= 0 or sample_rate_hz <= 0:
        raise ParameterError("buffer size and sample rate must be positive")
    return buffer_samples / sample_rate_hz


def expected_misaligned_samples(buffer_samples: int) -> float:
    """Mean samples demodulated with a stale configuration per switch, for equiprobable classes."""
    if buffer_samples < 1:
        raise ParameterError("buffer_samples must be >= 1")
    return buffer_samples / 2


def inferences_per_switch(switch_time_s: float, buffer_samples: int, sample_rate_hz: float) -> float:
    if switch_time_s <= 0 or buffer_samples <= 0 or sample_rate_hz <= 0:
        raise ParameterError("all arguments must be positive")
    return switch_time_s * sample_rate_hz / buffer_samples


def pipelined_cycles(arch: RfnetArch) -> int:
    """Lower-bound clock cycles for one inference with line-buffered convolutions.

    Each conv layer costs its line fill, window load and one tick per output
    window (all filters in parallel); each dense layer one tick per output
    neuron. Memory stalls and inter-layer handshakes are ignored.
    """
    cycles, w, h = 0, arch.input_w, arch.input_h
    for _ in range(arch.m):
        cycles += conv_cycles(w, h, arch.f)
        w, h = w - arch.f + 1, h - arch.f + 1
    return cycles + sum(o for o, _ in arch.dense_shapes)


def pipelined_cycle_estimate(arch: RfnetArch, clock_hz: float) -> float:
    """Lower-bound inference latency in seconds at ``clock_hz``."""
    if clock_hz <= 0:
        raise ParameterError("clock_hz must be positive")
    return pipelined_cycles(arch) / clock_hz


def budget_table(b: BudgetInputs) -> dict:
    """Every derived quantity for one operating point, as plain numbers."""
    f = is_realtime_feasible(b)
    bound = _floor_exactish(b.sample_rate_hz * b.t_cn_s / 2)  # B must exceed this
    row = {
        "sample_rate_hz": b.sample_rate_hz,
        "buffer_samples": b.buffer_samples,
        "total_latency_s": b.total_latency_s,
        "load": f.load,
        "slack": f.slack,
        "feasible": f.feasible,
        "buffer_bound_samples": bound,
        "min_buffer_samples": min_buffer_size(b.sample_rate_hz, b.t_cn_s),
        "min_switch_time_s": bound / b.sample_rate_hz,
        "buffer_switch_time_s": min_switch_time(b.buffer_samples, b.sample_rate_hz),
        "expected_misaligned_samples": expected_misaligned_samples(b.buffer_samples),
    }
    if b.switch_time_s:
        row["inferences_per_switch"] = inferences_per_switch(b.switch_time_s, b.buffer_samples, b.sample_rate_hz)
        row["misaligned_fraction"] = row["expected_misaligned_samples"] / (b.switch_time_s * b.sample_rate_hz)
    return row
