"""Baseband waveform synthesis for a switching transmitter.

Single-carrier PSK/QAM and OFDM modems, a simple impairment channel and the
schedule generator that concatenates per-configuration segments.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import InputShapeError, InsufficientDataError, ParameterError


class Modulation(str, enum.Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    PSK8 = "8PSK"
    QAM16 = "16QAM"
    QAM32 = "32QAM"
    QAM64 = "64QAM"

    @property
    def bits_per_symbol(self) -> int:
        return _BITS[self]


_BITS = {
    Modulation.BPSK: 1,
    Modulation.QPSK: 2,
    Modulation.PSK8: 3,
    Modulation.QAM16: 4,
    Modulation.QAM32: 5,
    Modulation.QAM64: 6,
}


@dataclass(frozen=True)
class IQStream:
    """Complex baseband samples at a fixed sample rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        if s.ndim != 1:
            raise InputShapeError(f"samples must be 1-D, got shape {s.shape}")
        if not self.sample_rate_hz > 0:
            raise ParameterError("sample_rate_hz must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __getitem__(self, item: slice) -> "IQStream":
        if not isinstance(item, slice):
            raise TypeError("IQStream supports slicing only")
        return IQStream(self.samples[item], self.sample_rate_hz)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class SingleCarrierConfig:
    modulation: Modulation
    samples_per_symbol: int = 1
    freq_shift_hz: float = 0.0
    pulse: str = "rrc"

    def __post_init__(self):
        object.__setattr__(self, "modulation", Modulation(self.modulation))
        if int(self.samples_per_symbol) < 1:
            raise ParameterError("samples_per_symbol must be >= 1")
        object.__setattr__(self, "samples_per_symbol", int(self.samples_per_symbol))
        if self.pulse not in ("rrc", "rect"):
            raise ParameterError(f"unknown pulse shape {self.pulse!r}")

    @property
    def symbol_len(self) -> int:
        return self.samples_per_symbol

    @property
    def bits_per_symbol(self) -> int:
        return self.modulation.bits_per_symbol

    @property
    def name(self) -> str:
        return f"{self.modulation.value}, {self.freq_shift_hz / 1000:g} kHz"

    def to_dict(self) -> dict:
        return {
            "kind": "single_carrier",
            "modulation": self.modulation.value,
            "samples_per_symbol": self.samples_per_symbol,
            "freq_shift_hz": float(self.freq_shift_hz),
            "pulse": self.pulse,
        }


OFDM_FFT_SIZES = (64, 128, 256)
OFDM_MODULATIONS = (Modulation.BPSK, Modulation.QPSK, Modulation.PSK8)


@dataclass(frozen=True)
class OfdmConfig:
    fft_size: int
    bin_modulation: Modulation = Modulation.QPSK
    cp_len: int | None = None
    occupied_bins: tuple[int, ...] | None = None

    def __post_init__(self):
        n = int(self.fft_size)
        if n not in OFDM_FFT_SIZES:
            raise ParameterError(f"fft_size must be one of {OFDM_FFT_SIZES}, got {n}")
        mod = Modulation(self.bin_modulation)
        if mod not in OFDM_MODULATIONS:
            raise ParameterError(f"OFDM bins support BPSK/QPSK/8PSK, got {mod.value}")
        cp = n // 4 if self.cp_len is None else int(self.cp_len)
        if not 0 <= cp < n:
            raise ParameterError("cp_len must satisfy 0 <= cp_len < fft_size")
        bins = tuple(range(1, n)) if self.occupied_bins is None else tuple(sorted(set(int(b) for b in self.occupied_bins)))
        if any(b <= 0 or b >= n for b in bins):
            raise ParameterError("occupied bins must lie in [1, fft_size) (DC excluded)")
        if not bins:
            raise ParameterError("at least one occupied bin is required")
        object.__setattr__(self, "fft_size", n)
        object.__setattr__(self, "bin_modulation", mod)
        object.__setattr__(self, "cp_len", cp)
        object.__setattr__(self, "occupied_bins", bins)

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def bits_per_symbol(self) -> int:
        return len(self.occupied_bins) * self.bin_modulation.bits_per_symbol

    @property
    def name(self) -> str:
        return f"OFDM-{self.fft_size}, {self.bin_modulation.value}"

    def to_dict(self) -> dict:
        return {
            "kind": "ofdm",
            "fft_size": self.fft_size,
            "bin_modulation": self.bin_modulation.value,
            "cp_len": self.cp_len,
            "n_occupied": len(self.occupied_bins),
        }


PhyConfig = Union[SingleCarrierConfig, OfdmConfig]


def config_from_dict(d: dict) -> PhyConfig:
    if d["kind"] == "single_carrier":
        return SingleCarrierConfig(
            Modulation(d["modulation"]), d["samples_per_symbol"], d["freq_shift_hz"], d.get("pulse", "rrc")
        )
    if d["kind"] == "ofdm":
        return OfdmConfig(d["fft_size"], Modulation(d["bin_modulation"]), d.get("cp_len"))
    raise ParameterError(f"unknown config kind {d['kind']!r}")


# --- constellations -------------------------------------------------------


def _gray(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


def _gray_levels(n_bits: int) -> np.ndarray:
    """Amplitude level for each label on one Gray-coded PAM axis."""
    n = 1 << n_bits
    pos = np.arange(n)
    levels = np.empty(n)
    levels[_gray(pos)] = 2 * pos - (n - 1)
    return levels


@lru_cache(maxsize=None)
def _constellation(mod: Modulation) -> np.ndarray:
    if mod in (Modulation.BPSK, Modulation.QPSK, Modulation.PSK8):
        m = 1 << mod.bits_per_symbol
        offset = np.pi / 4 if mod is Modulation.QPSK else 0.0
        pos = np.arange(m)
        pts = np.empty(m, dtype=np.complex128)
        pts[_gray(pos)] = np.exp(1j * (2 * np.pi * pos / m + offset))
        if mod is Modulation.BPSK:
            pts = pts.real.astype(np.complex128)
    elif mod in (Modulation.QAM16, Modulation.QAM64):
        half = mod.bits_per_symbol // 2
        lv = _gray_levels(half)
        labels = np.arange(1 << mod.bits_per_symbol)
        pts = lv[labels >> half] + 1j * lv[labels & ((1 << half) - 1)]
    else:
        pts = _cross32()
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    return pts


def _cross32() -> np.ndarray:
    # 8x4 Gray rectangle (3 I bits, 2 Q bits); the |I| = 7 columns fold onto |Q| = 5 rows.
    li = _gray_levels(3)
    lq = _gray_levels(2)
    labels = np.arange(32)
    i = li[labels >> 2]
    q = lq[labels & 3]
    outer = np.abs(i) == 7
    i_new = np.where(outer, np.sign(i) * (4 - np.abs(q)), i)
    q_new = np.where(outer, np.sign(q) * 5, q)
    return i_new + 1j * q_new


def constellation(mod: Modulation | str) -> np.ndarray:
    """Unit-average-energy constellation; entry ``i`` is the point labelled by the bits of ``i`` (MSB first)."""
    return _constellation(Modulation(mod))


def bits_to_symbols(bits: np.ndarray, mod: Modulation | str) -> np.ndarray:
    mod = Modulation(mod)
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    k = mod.bits_per_symbol
    if bits.size % k:
        raise InputShapeError(f"{bits.size} bits is not a multiple of {k} bits per {mod.value} symbol")
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = bits.reshape(-1, k) @ weights
    return constellation(mod)[labels]


def symbols_to_bits(symbols: np.ndarray, mod: Modulation | str, chunk: int = 1 << 16) -> np.ndarray:
    """Hard-decision nearest-point demapping."""
    mod = Modulation(mod)
    pts = constellation(mod)
    k = mod.bits_per_symbol
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    labels = np.empty(symbols.size, dtype=np.int64)
    for lo in range(0, symbols.size, chunk):
        blk = symbols[lo:lo + chunk]
        labels[lo:lo + chunk] = np.argmin(np.abs(blk[:, None] - pts[None, :]), axis=1)
    shifts = np.arange(k - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.uint8).ravel()


# --- pulse shaping --------------------------------------------------------

RRC_ROLLOFF = 0.35
RRC_SPAN = 8


@lru_cache(maxsize=None)
def rrc_taps(sps: int, rolloff: float = RRC_ROLLOFF, span: int = RRC_SPAN) -> np.ndarray:
    """Unit-energy root-raised-cosine filter with ``span * sps + 1`` taps."""
    t = np.arange(-span * sps / 2, span * sps / 2 + 1) / sps
    b = rolloff
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if np.isclose(ti, 0.0):
            h[i] = 1 - b + 4 * b / np.pi
        elif np.isclose(abs(ti), 1 / (4 * b)):
            h[i] = b / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
        else:
            h[i] = (np.sin(np.pi * ti * (1 - b)) + 4 * b * ti * np.cos(np.pi * ti * (1 + b))) / (
                np.pi * ti * (1 - (4 * b * ti) ** 2)
            )
    h /= np.sqrt(np.sum(h ** 2))
    h.setflags(write=False)
    return h


def _circular_filter(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    delay = (h.size - 1) // 2
    return np.convolve(np.pad(x, delay, mode="wrap"), h, mode="valid")


def _shape(symbols: np.ndarray, cfg: SingleCarrierConfig) -> np.ndarray:
    # Tail-biting: each burst is filtered circularly so edge symbols keep their full pulse.
    sps = cfg.samples_per_symbol
    if cfg.pulse == "rect" or sps == 1:
        return np.repeat(symbols, sps)
    up = np.zeros(symbols.size * sps, dtype=np.complex128)
    up[::sps] = symbols
    # sqrt(sps) gives unit average sample power; the matched filter divides it back out
    return _circular_filter(up, rrc_taps(sps)) * np.sqrt(sps)


def _matched(x: np.ndarray, cfg: SingleCarrierConfig) -> np.ndarray:
    sps = cfg.samples_per_symbol
    n = x.size // sps
    if n == 0:
        return np.zeros(0, dtype=np.complex128)
    if cfg.pulse == "rect" or sps == 1:
        return x[:n * sps].reshape(n, sps).mean(axis=1)
    h = rrc_taps(sps)
    y = _circular_filter(x[: n * sps], h[::-1].conj()) / np.sqrt(sps)
    return y[::sps]


# --- single carrier -------------------------------------------------------


def apply_frequency_shift(x: IQStream, shift_hz: float, start_index: int = 0) -> IQStream:
    """Rotate ``x`` by ``shift_hz``; ``start_index`` is the time index of the first sample."""
    if abs(shift_hz) >= x.sample_rate_hz / 2:
        raise ParameterError(f"shift {shift_hz} Hz exceeds Nyquist for S={x.sample_rate_hz}")
    if shift_hz == 0:
        return x
    k = np.arange(start_index, start_index + len(x))
    return IQStream(x.samples * np.exp(2j * np.pi * shift_hz * k / x.sample_rate_hz), x.sample_rate_hz)


def modulate_single_carrier(bits, cfg: SingleCarrierConfig, sample_rate_hz: float) -> IQStream:
    symbols = bits_to_symbols(bits, cfg.modulation)
    x = IQStream(_shape(symbols, cfg), sample_rate_hz)
    return apply_frequency_shift(x, cfg.freq_shift_hz)


def demodulate_single_carrier(x: IQStream, cfg: SingleCarrierConfig, start_index: int = 0) -> np.ndarray:
    """Hard-decision bits from an oversampled single-carrier stream.

    ``start_index`` positions the first sample on the transmitter's time axis so
    the frequency shift is undone with the right phase.
    """
    if len(x) < cfg.samples_per_symbol:
        return np.zeros(0, dtype=np.uint8)
    base = apply_frequency_shift(x, -cfg.freq_shift_hz, start_index) if cfg.freq_shift_hz else x
    return symbols_to_bits(_matched(base.samples, cfg), cfg.modulation)


# --- OFDM -----------------------------------------------------------------


def ofdm_modulate(symbols, cfg: OfdmConfig, sample_rate_hz: float = 1.0) -> IQStream:
    """IDFT each row of ``symbols`` onto the occupied bins and prepend the cyclic prefix."""
    grid = np.atleast_2d(np.asarray(symbols, dtype=np.complex128))
    if grid.shape[1] != len(cfg.occupied_bins):
        raise InputShapeError(f"grid width {grid.shape[1]} != {len(cfg.occupied_bins)} occupied bins")
    n = cfg.fft_size
    freq = np.zeros((grid.shape[0], n), dtype=np.complex128)
    freq[:, cfg.occupied_bins] = grid
    body = np.fft.ifft(freq, axis=1)
    out = np.concatenate([body[:, n - cfg.cp_len:], body], axis=1) if cfg.cp_len else body
    return IQStream(out.ravel(), sample_rate_hz)


def ofdm_demodulate(x: IQStream, cfg: OfdmConfig, sync_offset: int = 0) -> np.ndarray:
    """Strip CP, FFT and return the occupied bins, one row per complete OFDM symbol."""
    L = cfg.symbol_len
    if len(x) < sync_offset + L:
        raise InsufficientDataError(f"need at least {sync_offset + L} samples, got {len(x)}")
    n_sym = (len(x) - sync_offset) // L
    blocks = x.samples[sync_offset:sync_offset + n_sym * L].reshape(n_sym, L)[:, cfg.cp_len:]
    return np.fft.fft(blocks, axis=1)[:, cfg.occupied_bins]


def ofdm_modulate_bits(bits, cfg: OfdmConfig, sample_rate_hz: float = 1.0) -> IQStream:
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size % cfg.bits_per_symbol:
        raise InputShapeError(f"{bits.size} bits do not fill whole OFDM symbols of {cfg.bits_per_symbol} bits")
    syms = bits_to_symbols(bits, cfg.bin_modulation).reshape(-1, len(cfg.occupied_bins))
    return ofdm_modulate(syms, cfg, sample_rate_hz)


def ofdm_demodulate_bits(x: IQStream, cfg: OfdmConfig, sync_offset: int = 0) -> np.ndarray:
    if len(x) < sync_offset + cfg.symbol_len:
        return np.zeros(0, dtype=np.uint8)
    return symbols_to_bits(ofdm_demodulate(x, cfg, sync_offset), cfg.bin_modulation)


def modulate(bits, cfg: PhyConfig, sample_rate_hz: float) -> IQStream:
    if isinstance(cfg, OfdmConfig):
        return ofdm_modulate_bits(bits, cfg, sample_rate_hz)
    return modulate_single_carrier(bits, cfg, sample_rate_hz)


def demodulate(x: IQStream, cfg: PhyConfig, start_index: int = 0) -> np.ndarray:
    """Bits for every complete symbol in ``x``; ``x`` must start on a symbol boundary."""
    if isinstance(cfg, OfdmConfig):
        return ofdm_demodulate_bits(x, cfg)
    return demodulate_single_carrier(x, cfg, start_index)


# --- channel --------------------------------------------------------------


@dataclass(frozen=True)
class ChannelModel:
    snr_db: float = float("inf")
    cfo_hz: float = 0.0
    taps: tuple[complex, ...] = (1.0 + 0j,)
    seed: int = 0

    def __post_init__(self):
        if len(self.taps) == 0:
            raise ParameterError("channel needs at least one tap")
        object.__setattr__(self, "taps", tuple(complex(t) for t in self.taps))

    @classmethod
    def identity(cls) -> "ChannelModel":
        return cls()

    @classmethod
    def nlos(cls, snr_db: float = 15.0, seed: int = 0, decay: float = 0.5, n_taps: int = 3) -> "ChannelModel":
        """Exponentially decaying multipath with seeded random phases."""
        rng = np.random.default_rng([seed, 0x71A9])
        mags = decay ** np.arange(n_taps)
        phases = np.concatenate([[0.0], rng.uniform(0, 2 * np.pi, n_taps - 1)])
        taps = mags * np.exp(1j * phases)
        taps /= np.sqrt(np.sum(np.abs(taps) ** 2))
        return cls(snr_db=snr_db, taps=tuple(taps), seed=seed)


def apply_channel(x: IQStream, ch: ChannelModel) -> IQStream:
    """FIR multipath, then CFO rotation, then complex AWGN at ``ch.snr_db``."""
    y = x.samples
    taps = np.asarray(ch.taps)
    if not (taps.size == 1 and taps[0] == 1):
        y = np.convolve(y, taps)[: y.size]
    if ch.cfo_hz:
        k = np.arange(y.size)
        y = y * np.exp(2j * np.pi * ch.cfo_hz * k / x.sample_rate_hz)
    if np.isfinite(ch.snr_db) and y.size:
        rng = np.random.default_rng(ch.seed)
        p_sig = np.mean(np.abs(y) ** 2)
        sigma = np.sqrt(p_sig / 10 ** (ch.snr_db / 10) / 2)
        y = y + sigma * (rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size))
    return IQStream(y, x.sample_rate_hz)


# --- switching transmitter ------------------------------------------------


@dataclass(frozen=True)
class TransmitterSchedule:
    entries: tuple[tuple[PhyConfig, int], ...]
    switch_time_s: float
    sample_rate_hz: float
    n_classes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((c, int(l)) for c, l in self.entries))
        if not self.entries:
            raise ParameterError("schedule needs at least one entry")
        if not self.switch_time_s > 0 or not self.sample_rate_hz > 0:
            raise ParameterError("switch time and sample rate must be positive")
        if self.n_classes is not None and any(not 0 <= l < self.n_classes for _, l in self.entries):
            raise ParameterError("label out of range")

    @property
    def segment_len(self) -> int:
        return int(round(self.switch_time_s * self.sample_rate_hz))


@dataclass(frozen=True)
class LabelTrack:
    """Ground truth of a switching stream: one segment per schedule entry.

    Iterating yields ``(start_index, label)``. ``starts`` may be negative for a
    capture that begins inside a segment; ``configs`` and ``payloads`` carry
    what the transmitter actually sent in each segment.
    """

    starts: tuple[int, ...]
    labels: tuple[int, ...]
    segment_len: int
    configs: tuple[PhyConfig, ...] = ()
    payloads: tuple[np.ndarray, ...] = field(default=(), repr=False, compare=False)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(zip(self.starts, self.labels))

    def __len__(self) -> int:
        return len(self.starts)

    def __getitem__(self, i: int) -> tuple[int, int]:
        return self.starts[i], self.labels[i]

    def label_at(self, index: int) -> int:
        """Label of the segment containing sample ``index``."""
        pos = np.searchsorted(self.starts, index, side="right") - 1
        if pos < 0 or index >= self.starts[pos] + self.segment_len:
            raise IndexError(f"sample {index} is outside every segment")
        return self.labels[pos]

    def shifted(self, offset: int) -> "LabelTrack":
        """The same track seen from a capture starting at sample ``offset``."""
        return LabelTrack(
            tuple(s - offset for s in self.starts), self.labels, self.segment_len, self.configs, self.payloads
        )


def segment_payload(cfg: PhyConfig, segment_len: int, payload_seed: int, index: int) -> np.ndarray:
    """Random payload filling every complete symbol of one segment."""
    n_sym = segment_len // cfg.symbol_len
    rng = np.random.default_rng([payload_seed, index])
    return rng.integers(0, 2, n_sym * cfg.bits_per_symbol, dtype=np.uint8)


def _segment_waveform(bits: np.ndarray, cfg: PhyConfig, segment_len: int, sample_rate_hz: float) -> np.ndarray:
    x = modulate(bits, cfg, sample_rate_hz).samples
    if isinstance(cfg, OfdmConfig):
        # transmit gain: unit average power regardless of FFT size
        x = x * (cfg.fft_size / np.sqrt(len(cfg.occupied_bins)))
    out = np.zeros(segment_len, dtype=np.complex128)
    out[: x.size] = x
    return out


def generate_schedule_stream(sched: TransmitterSchedule, payload_seed: int) -> tuple[IQStream, LabelTrack]:
    L = sched.segment_len
    segs, payloads = [], []
    for i, (cfg, _) in enumerate(sched.entries):
        bits = segment_payload(cfg, L, payload_seed, i)
        payloads.append(bits)
        segs.append(_segment_waveform(bits, cfg, L, sched.sample_rate_hz))
    track = LabelTrack(
        starts=tuple(i * L for i in range(len(sched.entries))),
        labels=tuple(l for _, l in sched.entries),
        segment_len=L,
        configs=tuple(c for c, _ in sched.entries),
        payloads=tuple(payloads),
    )
    return IQStream(np.concatenate(segs), sched.sample_rate_hz), track


def random_schedule(
    configs: Sequence[PhyConfig], n_entries: int, switch_time_s: float, sample_rate_hz: float, seed: int
) -> TransmitterSchedule:
    """Pseudo-random schedule where consecutive entries always differ."""
    rng = np.random.default_rng(seed)
    labels = [int(rng.integers(len(configs)))]
    while len(labels) < n_entries:
        nxt = int(rng.integers(len(configs) - 1))
        labels.append(nxt + (nxt >= labels[-1]))
    return TransmitterSchedule(
        tuple((configs[l], l) for l in labels), switch_time_s, sample_rate_hz, n_classes=len(configs)
    )
