import csv
import io
import json

import numpy as np
import pytest

from polyrf.errors import InsufficientDataError, ParameterError
from polyrf.polyrx import (
    ClassCatalog,
    PerfectClassifier,
    ReceiverRun,
    RfnetClassifier,
    WrongClassifier,
    capture,
    classify_buffer,
    confusion_matrix,
    decide_buffers,
    misdemodulated_samples,
    oracle_receive,
    poly_receive,
    switching_trial,
)
from polyrf.rfnet import FloatParams, RfnetArch, RfnetModel, init_params
from polyrf.waveform import (
    ChannelModel,
    IQStream,
    OfdmConfig,
    SingleCarrierConfig,
    TransmitterSchedule,
    apply_channel,
    generate_schedule_stream,
)

OFDM = ClassCatalog.ofdm_9()


def _stream(catalog, labels, seg_len, seed=0, S=1e6):
    sched = TransmitterSchedule(tuple((catalog[l], l) for l in labels), seg_len / S, S, len(catalog))
    return generate_schedule_stream(sched, payload_seed=seed)


def _perfect(track, catalog, B):
    return ReceiverRun(B, PerfectClassifier(track, len(catalog)))


def test_catalog_orders():
    sc = ClassCatalog.single_carrier_18()
    assert len(sc) == 18
    assert sc.names[:4] == ["BPSK, 0 kHz", "BPSK, 1 kHz", "BPSK, 2 kHz", "QPSK, 0 kHz"]
    assert sc.names[-1] == "64QAM, 2 kHz"
    assert all(c.samples_per_symbol == 10 for c in sc.configs)
    assert len(OFDM) == 9
    assert OFDM[0] == OfdmConfig(64, "BPSK") and OFDM[8] == OfdmConfig(256, "8PSK")


def test_catalog_rejects_duplicates():
    c = SingleCarrierConfig("QPSK", 2)
    with pytest.raises(ParameterError):
        ClassCatalog((c, c))


def test_aligned_perfect_receiver_equals_oracle():
    x, track = _stream(OFDM, [0, 4, 8, 2], 40_000)
    run = _perfect(track, OFDM, 10_000)
    poly = poly_receive(x, track, run, OFDM)
    oracle = oracle_receive(x, track, OFDM)
    for p, o in zip(poly.per_class, oracle.per_class):
        assert p.bits_correct == p.oracle_bits_correct == o.oracle_bits_correct
        assert p.bits_demodulated == o.oracle_bits_demodulated
    assert poly.ratio == 1.0
    assert poly.accuracy == 1.0


def test_aligned_perfect_receiver_equals_oracle_through_channel():
    sc = ClassCatalog.single_carrier_18(samples_per_symbol=4)
    x, track = _stream(sc, [3, 10, 17], 20_000, S=100e3)
    y = apply_channel(x, ChannelModel.nlos(snr_db=8, seed=2))
    poly = poly_receive(y, track, _perfect(track, sc, 5_000), sc)
    assert poly.total.bits_correct == poly.total.oracle_bits_correct
    assert poly.total.oracle_bits_correct < poly.total.oracle_bits_demodulated


def test_wrong_classifier_scores_nothing():
    x, track = _stream(OFDM, [1, 5, 7], 30_000)
    rep = poly_receive(x, track, ReceiverRun(10_000, WrongClassifier(track, 9)), OFDM)
    assert rep.total.bits_correct == 0
    assert rep.total.bits_demodulated > 0
    assert rep.accuracy == 0.0


def test_oracle_dominates_and_correct_below_demodulated():
    x, track = _stream(OFDM, [2, 6, 3, 0], 50_000, seed=3)
    cap, tr = capture(x, track, 7_321, 150_000)
    rep = poly_receive(cap, tr, _perfect(tr, OFDM, 25_000), OFDM)
    t = rep.total
    assert t.oracle_bits_correct >= t.bits_correct
    for s in rep.per_class:
        assert s.bits_correct <= s.bits_demodulated
        assert s.oracle_bits_correct <= s.oracle_bits_demodulated


def test_misaligned_loss_bounded_by_one_buffer():
    B = 20_000
    x, track = _stream(OFDM, [0, 1, 2, 3, 4, 5], 100_000, seed=1)
    for phase in (1, 5_000, 13_777, 19_999):
        n = (len(x) - phase) // B * B
        cap, tr = capture(x, track, phase, n)
        rep = poly_receive(cap, tr, _perfect(tr, OFDM, B), OFDM)
        lost = rep.total.oracle_bits_correct - rep.total.bits_correct
        worst = max(OFDM[l].bits_per_symbol / OFDM[l].symbol_len for l in track.labels) * (B + 320)
        assert 0 < lost <= 5 * worst


def test_oracle_scales_with_bits_per_symbol():
    counts = []
    for mod in ("BPSK", "QPSK", "8PSK"):
        cfg = OfdmConfig(128, mod)
        cat = ClassCatalog((cfg, OfdmConfig(64, "BPSK")))
        x, track = _stream(cat, [0], 64_000)
        counts.append(oracle_receive(x, track, cat).total.oracle_bits_correct)
    assert counts[1] == 2 * counts[0] and counts[2] == 3 * counts[0]


def test_oracle_handles_partial_segments():
    x, track = _stream(OFDM, [8, 0], 10_000)
    cap, tr = capture(x, track, 1_000, 15_000)
    rep = oracle_receive(cap, tr, OFDM)
    # symbols stay on the segment's own grid: 31 fit, the first 4 start before the capture
    assert rep.per_class[8].oracle_bits_correct == (31 - 4) * 255 * 3
    assert rep.per_class[0].oracle_bits_correct == (6_000 // 80) * 63


def test_track_must_match_catalog():
    x, track = _stream(OFDM, [0, 1], 1_000)
    other = ClassCatalog((OfdmConfig(256, "QPSK"), OfdmConfig(128, "BPSK")))
    with pytest.raises(ParameterError):
        oracle_receive(x, track, other)


def test_stream_shorter_than_buffer():
    x, track = _stream(OFDM, [0], 1_000)
    with pytest.raises(InsufficientDataError):
        poly_receive(x, track, _perfect(track, OFDM, 2_000), OFDM)


def _sign_model():
    # 1x1 input: class 0 when I > 0, class 1 otherwise
    arch = RfnetArch.dense_baseline((), 1, 1, 2)
    params = FloatParams((), ((np.array([[1.0, 0.0], [-1.0, 0.0]]), np.zeros(2)),))
    return RfnetModel(arch, params)


def test_rfnet_classifier_reads_buffer_head_only():
    model = _sign_model()
    run = ReceiverRun.from_model(model, 4, "fixed")
    buf = IQStream(np.array([1.0, -1, -1, -1]), 1.0)
    assert classify_buffer(buf, run).argmax == 0
    buf2 = IQStream(np.array([-1.0, 1, 1, 1]), 1.0)
    assert classify_buffer(buf2, run).argmax == 1
    with pytest.raises(ParameterError):
        ReceiverRun(0, RfnetClassifier(model))


def test_classify_buffer_too_short():
    arch = RfnetArch(m=1, c=(2,), input_w=4, input_h=4, n_classes=3)
    run = ReceiverRun.from_model(RfnetModel(arch, init_params(arch, 0)), 32)
    with pytest.raises(InsufficientDataError):
        classify_buffer(IQStream(np.zeros(15), 1.0), run)


def test_decide_buffers_batch_and_threaded_agree():
    x, track = _stream(OFDM, [0, 3, 6], 9_000)
    run = _perfect(track, OFDM, 1_000)
    np.testing.assert_array_equal(decide_buffers(x, run, workers=1), decide_buffers(x, run, workers=4))
    model = _sign_model()
    s = IQStream(np.repeat([1.0, -1.0, 1.0], 5), 1.0)
    np.testing.assert_array_equal(decide_buffers(s, ReceiverRun.from_model(model, 5)), [0, 1, 0])


def test_confusion_matrix_rows_are_truth():
    model = _sign_model()
    x = np.array([1.0, -1.0, 1.0, 2.0, -3.0]).reshape(5, 1, 1, 1) * np.array([1.0, 0.0])
    y = np.array([0, 1, 1, 0, 1])
    cm = confusion_matrix(x, y, model)
    np.testing.assert_array_equal(cm, [[2, 0], [1, 2]])
    good = confusion_matrix(x, np.array([0, 1, 0, 0, 1]), model)
    assert np.count_nonzero(good - np.diag(np.diag(good))) == 0


def test_report_formats_and_merge():
    B = 10_000
    reps = [
        switching_trial(OFDM, lambda tr: PerfectClassifier(tr, 9), seed=s, buffer_samples=B,
                        switch_time_s=0.01, sample_rate_hz=5e6, n_segments=4).report
        for s in range(3)
    ]
    ab_c = reps[0].merge(reps[1]).merge(reps[2])
    a_bc = reps[0].merge(reps[1].merge(reps[2]))
    assert ab_c.rows() == a_bc.rows()
    assert ab_c.duration_s == pytest.approx(sum(r.duration_s for r in reps))
    body = json.loads(ab_c.to_json())
    assert 0.8 <= body["ratio"] <= 1.0
    rows = list(csv.DictReader(io.StringIO(ab_c.to_csv())))
    assert len(rows) == 10 and rows[-1]["class"] == "total"
    for key in ("class", "config", "buffers", "accuracy", "bits_correct", "throughput_bps", "oracle_throughput_bps", "ratio"):
        assert key in rows[0]


def test_oracle_only_report_has_no_poly_columns():
    rep = switching_trial(OFDM, None, seed=0, buffer_samples=5_000, switch_time_s=0.004, sample_rate_hz=5e6, n_segments=3).report
    row = rep.rows()[0]
    assert "oracle_throughput_bps" in row
    assert "bits_correct" not in row and "ratio" not in row


def test_merge_rejects_different_catalogs():
    a = switching_trial(OFDM, None, seed=0, buffer_samples=5_000, switch_time_s=0.004, sample_rate_hz=5e6, n_segments=2).report
    sc = ClassCatalog.single_carrier_18(2)
    b = switching_trial(sc, None, seed=0, buffer_samples=500, switch_time_s=0.004, sample_rate_hz=1e5, n_segments=2).report
    with pytest.raises(ParameterError):
        a.merge(b)


def test_misdemodulated_samples_perfect_stub():
    x, track = _stream(OFDM, [0, 1], 1_000)
    cap, tr = capture(x, track, 300, 1_500)
    d = decide_buffers(cap, _perfect(tr, OFDM, 500))
    # buffers [0,500) [500,1000) [1000,1500); switch at 700 lies in buffer 1
    assert misdemodulated_samples(tr, d, 500) == 300


def test_switching_trial_reproducible():
    kw = dict(seed=4, buffer_samples=4_000, switch_time_s=0.004, sample_rate_hz=5e6, n_segments=3)
    a = switching_trial(OFDM, lambda tr: PerfectClassifier(tr, 9), **kw)
    b = switching_trial(OFDM, lambda tr: PerfectClassifier(tr, 9), **kw)
    assert a.report.to_json() == b.report.to_json()
    assert a.phase == b.phase and 0 <= a.phase < 4_000


def test_perfect_classifier_ratio_tracks_exposure_law():
    # same timing ratios as the 250k / 250 ms / 5 MS/s experiment, scaled down 10x
    kw = dict(buffer_samples=25_000, switch_time_s=0.025, sample_rate_hz=5e6, n_segments=6)
    ratios = [switching_trial(OFDM, lambda tr: PerfectClassifier(tr, 9), seed=s, **kw).report.ratio for s in range(20)]
    assert min(ratios) >= 0.8
    assert abs(np.mean(ratios) - 0.9) <= 0.05
