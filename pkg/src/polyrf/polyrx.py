"""Polymorphic receiver and its perfect-knowledge Oracle baseline.

The receiver cuts the incoming stream into consecutive buffers of ``B``
samples, classifies each from its first ``w*h`` samples and demodulates the
whole buffer with the configuration the classifier picked. A demodulation
chain keeps its state across consecutive buffers that chose the same
configuration, so a symbol is recovered whenever every buffer it touches
picked the configuration that actually produced it. Symbols demodulated with
the wrong configuration score zero correct bits.

Symbol timing is genie-aided for both receivers: the demodulator knows where
each transmitted symbol starts, so only the classification decision differs
between Poly and Oracle.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import InsufficientDataError, ParameterError
from .rfnet import RfnetModel, classify, predict
from .rfnet.layers import ClassPrediction
from .rftensor import build_tensor, build_tensors
from .waveform import (
    OFDM_FFT_SIZES,
    OFDM_MODULATIONS,
    ChannelModel,
    IQStream,
    LabelTrack,
    Modulation,
    OfdmConfig,
    PhyConfig,
    SingleCarrierConfig,
    apply_channel,
    demodulate,
    generate_schedule_stream,
    random_schedule,
)

SC_SHIFTS_HZ = (0.0, 1000.0, 2000.0)


@dataclass(frozen=True)
class ClassCatalog:
    configs: tuple[PhyConfig, ...]
    kind: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "configs", tuple(self.configs))
        if len(set(self.configs)) != len(self.configs):
            raise ParameterError("catalog configurations must be pairwise distinct")
        if len(self.configs) < 2:
            raise ParameterError("a catalog needs at least two classes")

    @classmethod
    def single_carrier_18(cls, samples_per_symbol: int = 10, pulse: str = "rrc") -> "ClassCatalog":
        """6 modulations x 3 frequency shifts, ordered by modulation then shift."""
        return cls(
            tuple(SingleCarrierConfig(m, samples_per_symbol, f, pulse) for m in Modulation for f in SC_SHIFTS_HZ),
            "single-carrier-18",
        )

    @classmethod
    def ofdm_9(cls) -> "ClassCatalog":
        """3 FFT sizes x BPSK/QPSK/8PSK bins, ordered by FFT size then modulation."""
        return cls(tuple(OfdmConfig(n, m) for n in OFDM_FFT_SIZES for m in OFDM_MODULATIONS), "ofdm-9")

    def __len__(self) -> int:
        return len(self.configs)

    def __getitem__(self, i: int) -> PhyConfig:
        return self.configs[i]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.configs]


# --- classifiers ----------------------------------------------------------

Classifier = Callable[[IQStream, int], ClassPrediction]


def _one_hot(label: int, n: int) -> ClassPrediction:
    p = np.zeros(n)
    p[label] = 1.0
    return ClassPrediction(p, int(label))


class RfnetClassifier:
    """Runs RFNet on the first ``w*h`` samples of each buffer."""

    def __init__(self, model: RfnetModel, mode: str = "float"):
        if mode not in ("float", "fixed"):
            raise ParameterError(f"mode must be 'float' or 'fixed', got {mode!r}")
        self.model = model
        self.mode = mode
        self.w = model.arch.input_w
        self.h = model.arch.input_h

    def __call__(self, buffer: IQStream, start: int = 0) -> ClassPrediction:
        return classify(self.model, build_tensor(buffer, self.w, self.h, 0), self.mode)

    def predict_many(self, heads: np.ndarray) -> np.ndarray:
        return predict(self.model, build_tensors(heads, self.w, self.h), self.mode)


class PerfectClassifier:
    """Test stub: reports the true label at the buffer head."""

    def __init__(self, track: LabelTrack, n_classes: int):
        self.track = track
        self.n_classes = n_classes
        self.w = self.h = 1

    def __call__(self, buffer: IQStream, start: int = 0) -> ClassPrediction:
        return _one_hot(self.track.label_at(start), self.n_classes)


class WrongClassifier(PerfectClassifier):
    """Test stub: always one class off the truth."""

    def __call__(self, buffer: IQStream, start: int = 0) -> ClassPrediction:
        return _one_hot((self.track.label_at(start) + 1) % self.n_classes, self.n_classes)


@dataclass(frozen=True)
class ReceiverRun:
    buffer_samples: int
    classifier: Classifier

    def __post_init__(self):
        need = getattr(self.classifier, "w", 1) * getattr(self.classifier, "h", 1)
        if self.buffer_samples < max(need, 1):
            raise ParameterError(f"buffer of {self.buffer_samples} samples cannot hold a {need}-sample input")

    @classmethod
    def from_model(cls, model: RfnetModel, buffer_samples: int, mode: str = "float") -> "ReceiverRun":
        return cls(buffer_samples, RfnetClassifier(model, mode))

    @property
    def input_samples(self) -> int:
        return getattr(self.classifier, "w", 1) * getattr(self.classifier, "h", 1)


def classify_buffer(buffer: IQStream, run: ReceiverRun, start: int = 0) -> ClassPrediction:
    if len(buffer) < run.input_samples:
        raise InsufficientDataError(f"buffer has {len(buffer)} samples, classifier needs {run.input_samples}")
    return run.classifier(buffer, start)


def decide_buffers(stream: IQStream, run: ReceiverRun, workers: int = 1) -> np.ndarray:
    """Argmax class for each complete buffer; the trailing partial buffer is dropped."""
    B = run.buffer_samples
    n_buf = len(stream) // B
    clf = run.classifier
    if isinstance(clf, RfnetClassifier):
        heads = stream.samples[: n_buf * B].reshape(n_buf, B)[:, : run.input_samples]
        return np.asarray(clf.predict_many(heads), dtype=np.int64) if n_buf else np.zeros(0, dtype=np.int64)

    def one(b: int) -> int:
        return classify_buffer(stream[b * B:(b + 1) * B], run, b * B).argmax

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return np.fromiter(ex.map(one, range(n_buf)), dtype=np.int64, count=n_buf)
    return np.fromiter((one(b) for b in range(n_buf)), dtype=np.int64, count=n_buf)


# --- reports --------------------------------------------------------------


@dataclass
class ClassStats:
    buffers: int = 0
    buffers_correct: int = 0
    bits_demodulated: int = 0
    bits_correct: int = 0
    oracle_bits_demodulated: int = 0
    oracle_bits_correct: int = 0

    def __add__(self, other: "ClassStats") -> "ClassStats":
        return ClassStats(*(a + b for a, b in zip(self._vals(), other._vals())))

    def _vals(self):
        return (self.buffers, self.buffers_correct, self.bits_demodulated, self.bits_correct,
                self.oracle_bits_demodulated, self.oracle_bits_correct)


@dataclass
class ThroughputReport:
    class_names: list[str]
    configs: list[dict]
    duration_s: float
    per_class: list[ClassStats]
    has_poly: bool = True
    has_oracle: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> ClassStats:
        out = ClassStats()
        for s in self.per_class:
            out = out + s
        return out

    @property
    def throughput_bps(self) -> float:
        return self.total.bits_correct / self.duration_s

    @property
    def oracle_throughput_bps(self) -> float:
        return self.total.oracle_bits_correct / self.duration_s

    @property
    def ratio(self) -> float:
        t = self.total
        return t.bits_correct / t.oracle_bits_correct if t.oracle_bits_correct else float("nan")

    @property
    def accuracy(self) -> float:
        t = self.total
        return t.buffers_correct / t.buffers if t.buffers else float("nan")

    def merge(self, other: "ThroughputReport") -> "ThroughputReport":
        if other.class_names != self.class_names:
            raise ParameterError("cannot merge reports over different catalogs")
        return ThroughputReport(
            self.class_names,
            self.configs,
            self.duration_s + other.duration_s,
            [a + b for a, b in zip(self.per_class, other.per_class)],
            self.has_poly and other.has_poly,
            self.has_oracle and other.has_oracle,
        )

    def rows(self) -> list[dict]:
        rows = []
        named = list(zip(self.class_names, self.configs, self.per_class)) + [("total", {}, self.total)]
        for name, cfg, s in named:
            row = {"class": name, "config": json.dumps(cfg, sort_keys=True)}
            if self.has_poly:
                row["buffers"] = s.buffers
                row["accuracy"] = s.buffers_correct / s.buffers if s.buffers else None
                row["bits_demodulated"] = s.bits_demodulated
                row["bits_correct"] = s.bits_correct
                row["throughput_bps"] = s.bits_correct / self.duration_s
            if self.has_oracle:
                row["oracle_bits_correct"] = s.oracle_bits_correct
                row["oracle_throughput_bps"] = s.oracle_bits_correct / self.duration_s
            if self.has_poly and self.has_oracle:
                row["ratio"] = s.bits_correct / s.oracle_bits_correct if s.oracle_bits_correct else None
            rows.append(row)
        return rows

    def to_json(self) -> str:
        body = {"duration_s": self.duration_s, "rows": self.rows(), "meta": self.meta}
        if self.has_poly and self.has_oracle:
            body["ratio"] = self.ratio
        return json.dumps(body, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        rows = self.rows()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()


# --- demodulation and scoring ---------------------------------------------


def _segment_symbols(track: LabelTrack, i: int) -> tuple[int, int, PhyConfig]:
    cfg = track.configs[i]
    return track.starts[i], track.segment_len // cfg.symbol_len, cfg


def _score_symbols(stream: IQStream, track: LabelTrack, i: int, lo: int, hi: int) -> tuple[int, int]:
    """Demodulate the complete symbols of segment ``i`` lying inside samples ``[lo, hi)``."""
    s, n_sym, cfg = _segment_symbols(track, i)
    L = cfg.symbol_len
    j0 = max(0, -(-(lo - s) // L))
    j1 = min(n_sym, (hi - s) // L)
    if j1 <= j0:
        return 0, 0
    x = stream[s + j0 * L: s + j1 * L]
    bits = demodulate(x, cfg, start_index=j0 * L)
    k = cfg.bits_per_symbol
    truth = track.payloads[i][j0 * k: j1 * k]
    return int(bits.size), int(np.count_nonzero(bits == truth))


def _check_track(track: LabelTrack, catalog: ClassCatalog) -> None:
    if not track.configs or not track.payloads:
        raise ParameterError("label track carries no configurations/payloads to score against")
    for cfg, label in zip(track.configs, track.labels):
        if catalog[label] != cfg:
            raise ParameterError(f"label {label} does not match catalog entry for {cfg.name}")


def _empty_report(catalog: ClassCatalog, stream: IQStream, has_poly: bool) -> ThroughputReport:
    return ThroughputReport(
        catalog.names, [c.to_dict() for c in catalog.configs], stream.duration_s,
        [ClassStats() for _ in catalog.configs], has_poly=has_poly, has_oracle=True,
    )


def oracle_receive(stream: IQStream, truth: LabelTrack, catalog: ClassCatalog) -> ThroughputReport:
    """Demodulate every complete symbol with the configuration that produced it."""
    _check_track(truth, catalog)
    report = _empty_report(catalog, stream, has_poly=False)
    _fill_oracle(report, stream, truth)
    return report


def _fill_oracle(report: ThroughputReport, stream: IQStream, truth: LabelTrack) -> None:
    for i, label in enumerate(truth.labels):
        demod, correct = _score_symbols(stream, truth, i, 0, len(stream))
        report.per_class[label].oracle_bits_demodulated += demod
        report.per_class[label].oracle_bits_correct += correct


def _runs(values: np.ndarray) -> Iterable[tuple[int, int, int]]:
    """Maximal runs ``(first, stop, value)`` of equal consecutive entries."""
    if values.size == 0:
        return
    edges = np.flatnonzero(np.diff(values)) + 1
    starts = np.concatenate([[0], edges])
    stops = np.concatenate([edges, [values.size]])
    for a, b in zip(starts, stops):
        yield int(a), int(b), int(values[a])


def poly_receive(
    stream: IQStream,
    truth: LabelTrack,
    run: ReceiverRun,
    catalog: ClassCatalog,
    decisions: np.ndarray | None = None,
) -> ThroughputReport:
    """Classify, morph and demodulate buffer by buffer; the Oracle is scored alongside."""
    B = run.buffer_samples
    if len(stream) < B:
        raise InsufficientDataError(f"stream of {len(stream)} samples is shorter than one buffer ({B})")
    _check_track(truth, catalog)
    if decisions is None:
        decisions = decide_buffers(stream, run)
    n_buf = decisions.size
    covered = n_buf * B
    report = _empty_report(catalog, stream, has_poly=True)

    for b in range(n_buf):
        true_label = truth.label_at(b * B)
        st = report.per_class[true_label]
        st.buffers += 1
        st.buffers_correct += int(decisions[b] == true_label)

    for i, label in enumerate(truth.labels):
        s = truth.starts[i]
        lo, hi = max(s, 0), min(s + truth.segment_len, covered)
        if hi <= lo:
            continue
        first, last = lo // B, (hi - 1) // B
        for a, z, chosen in _runs(decisions[first:last + 1]):
            r_lo = max(lo, (first + a) * B)
            r_hi = min(hi, (first + z) * B)
            if chosen == label:
                demod, correct = _score_symbols(stream, truth, i, r_lo, r_hi)
            else:
                cfg = catalog[chosen]
                demod, correct = (r_hi - r_lo) // cfg.symbol_len * cfg.bits_per_symbol, 0
            report.per_class[label].bits_demodulated += demod
            report.per_class[label].bits_correct += correct

    _fill_oracle(report, stream, truth)
    return report


def misdemodulated_samples(truth: LabelTrack, decisions: np.ndarray, buffer_samples: int) -> int:
    """Samples inside complete buffers that were demodulated with a configuration other than their own."""
    B = buffer_samples
    total = 0
    for b, chosen in enumerate(decisions):
        for s, label in truth:
            lo, hi = max(s, b * B), min(s + truth.segment_len, (b + 1) * B)
            if hi > lo and label != chosen:
                total += hi - lo
    return total


def confusion_matrix(x: np.ndarray, y: np.ndarray, model: RfnetModel, mode: str = "float") -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ParameterError("empty dataset")
    pred = predict(model, x, mode)
    n = model.arch.n_classes
    return np.bincount(y * n + pred, minlength=n * n).reshape(n, n)


# --- switching experiment -------------------------------------------------


def capture(stream: IQStream, truth: LabelTrack, start: int, n_samples: int) -> tuple[IQStream, LabelTrack]:
    """A receiver capture of ``n_samples`` beginning at transmitter sample ``start``."""
    if start < 0 or start + n_samples > len(stream):
        raise InsufficientDataError("capture window exceeds the stream")
    return stream[start:start + n_samples], truth.shifted(start)


@dataclass(frozen=True)
class SwitchingTrial:
    report: ThroughputReport
    phase: int
    labels: tuple[int, ...]


def switching_trial(
    catalog: ClassCatalog,
    make_classifier: Callable[[LabelTrack], Classifier] | None,
    *,
    seed: int,
    buffer_samples: int = 250_000,
    switch_time_s: float = 0.25,
    sample_rate_hz: float = 5e6,
    n_segments: int = 6,
    channel: ChannelModel | None = None,
) -> SwitchingTrial:
    """One Poly-vs-Oracle run over a pseudo-random schedule.

    The receiver's buffer grid starts at a uniformly random phase relative to
    the transmitter's switching instants; the capture spans as many whole
    buffers as fit after that phase. ``make_classifier=None`` scores the
    Oracle alone.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    sched = random_schedule(catalog.configs, n_segments, switch_time_s, sample_rate_hz, seed)
    stream, track = generate_schedule_stream(sched, payload_seed=seed)
    if channel is not None:
        stream = apply_channel(stream, ChannelModel(channel.snr_db, channel.cfo_hz, channel.taps, seed))
    B = buffer_samples
    phase = int(rng.integers(0, B))
    n_buf = (len(stream) - phase) // B
    if n_buf < 1:
        raise InsufficientDataError("schedule too short for one buffer")
    cap, cap_track = capture(stream, track, phase, n_buf * B)
    if make_classifier is None:
        report = oracle_receive(cap, cap_track, catalog)
    else:
        report = poly_receive(cap, cap_track, ReceiverRun(B, make_classifier(cap_track)), catalog)
    report.meta.update(seed=seed, phase=phase, labels=list(track.labels))
    return SwitchingTrial(report, phase, track.labels)
