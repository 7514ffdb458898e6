import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyrf.errors import InputShapeError, InsufficientDataError, ParameterError
from polyrf.waveform import (
    ChannelModel,
    IQStream,
    LabelTrack,
    Modulation,
    OfdmConfig,
    SingleCarrierConfig,
    TransmitterSchedule,
    apply_channel,
    apply_frequency_shift,
    bits_to_symbols,
    config_from_dict,
    constellation,
    demodulate,
    demodulate_single_carrier,
    generate_schedule_stream,
    modulate,
    modulate_single_carrier,
    ofdm_demodulate,
    ofdm_demodulate_bits,
    ofdm_modulate,
    ofdm_modulate_bits,
    random_schedule,
    rrc_taps,
    symbols_to_bits,
)

S = 100e3


def _bits(n, seed=0):
    return np.random.default_rng(seed).integers(0, 2, n, dtype=np.uint8)


# --- constellations ---


@pytest.mark.parametrize("mod", list(Modulation))
def test_constellation_unit_energy_and_size(mod):
    pts = constellation(mod)
    assert pts.size == 1 << mod.bits_per_symbol
    assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert len(np.unique(np.round(pts, 9))) == pts.size


@pytest.mark.parametrize("mod", [Modulation.BPSK, Modulation.QPSK, Modulation.PSK8, Modulation.QAM16, Modulation.QAM64])
def test_gray_neighbours_differ_in_one_bit(mod):
    pts = constellation(mod)
    d = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(d, np.inf)
    dmin = d.min()
    for i in range(pts.size):
        for j in np.flatnonzero(np.isclose(d[i], dmin)):
            assert bin(i ^ j).count("1") == 1


def test_32qam_cross_is_quasi_gray():
    pts = constellation("32QAM")
    d = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(d, np.inf)
    near = np.isclose(d, d.min())
    flips = [bin(i ^ j).count("1") for i, j in zip(*np.nonzero(near))]
    # only the 8 fold seams break the Gray property
    assert np.bincount(flips).tolist() == [0, 96, 0, 8]
    # cross shape: 6x6 grid without the four corners
    grid = pts / (np.abs(pts.real).min())
    assert np.unique(np.round(grid.real, 6)).size == 6
    assert not np.any(np.isclose(np.abs(grid.real), 5) & np.isclose(np.abs(grid.imag), 5))


def test_bpsk_identity_mapping():
    x = modulate_single_carrier([0, 1], SingleCarrierConfig("BPSK", 1, 0.0, "rect"), S)
    np.testing.assert_allclose(x.samples, [1, -1], atol=1e-15)


def test_qpsk_gray_labels():
    pts = constellation("QPSK")
    np.testing.assert_allclose(pts, np.exp(1j * np.pi * np.array([1, 3, 7, 5]) / 4), atol=1e-12)


def test_bits_not_multiple_of_k():
    with pytest.raises(InputShapeError):
        bits_to_symbols([1, 0, 1], "QPSK")


@pytest.mark.parametrize("mod", list(Modulation))
def test_symbol_round_trip(mod):
    b = _bits(mod.bits_per_symbol * 300)
    np.testing.assert_array_equal(symbols_to_bits(bits_to_symbols(b, mod), mod), b)


def test_64qam_ser_at_30db():
    rng = np.random.default_rng(3)
    n = 100_000
    labels = rng.integers(0, 64, n)
    s = constellation("64QAM")[labels]
    sigma = np.sqrt(10 ** (-30 / 10) / 2)
    r = s + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    dec = np.argmin(np.abs(r[:, None] - constellation("64QAM")[None, :]), axis=1)
    assert np.mean(dec != labels) < 1e-3


# --- single carrier ---


def test_rrc_taps_unit_energy_and_symmetric():
    h = rrc_taps(10)
    assert h.size == 8 * 10 + 1
    assert np.sum(h ** 2) == pytest.approx(1.0)
    np.testing.assert_allclose(h, h[::-1], atol=1e-15)


@pytest.mark.parametrize("mod", list(Modulation))
@pytest.mark.parametrize("sps", [1, 2, 5, 10])
@pytest.mark.parametrize("pulse", ["rrc", "rect"])
def test_single_carrier_loopback(mod, sps, pulse):
    cfg = SingleCarrierConfig(mod, sps, 1000.0 if sps > 1 else 0.0, pulse)
    b = _bits(mod.bits_per_symbol * 257)
    x = modulate_single_carrier(b, cfg, S)
    assert len(x) == 257 * sps
    np.testing.assert_array_equal(demodulate_single_carrier(x, cfg), b)


def test_rect_sps_repeats_symbols():
    x = modulate_single_carrier([0, 1], SingleCarrierConfig("BPSK", 3, 0.0, "rect"), S)
    np.testing.assert_allclose(x.samples, [1, 1, 1, -1, -1, -1])


def test_rrc_unit_average_power():
    x = modulate_single_carrier(_bits(2 * 4000), SingleCarrierConfig("QPSK", 8), S)
    assert np.mean(np.abs(x.samples) ** 2) == pytest.approx(1.0, rel=0.05)


def test_frequency_shift_phase_advance():
    x = IQStream(np.ones(8), S)
    y = apply_frequency_shift(x, 1000.0)
    np.testing.assert_allclose(np.angle(y.samples[1] / y.samples[0]), 2 * np.pi * 1000 / S)


def test_frequency_shift_start_index_continuity():
    x = IQStream(np.ones(100), S)
    whole = apply_frequency_shift(x, 2000.0)
    tail = apply_frequency_shift(x[40:], 2000.0, start_index=40)
    np.testing.assert_allclose(tail.samples, whole.samples[40:])


def test_frequency_shift_beyond_nyquist():
    with pytest.raises(ParameterError):
        apply_frequency_shift(IQStream(np.ones(4), 1000.0), 600.0)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(list(Modulation)), st.integers(1, 12), st.integers(1, 60), st.integers(0, 2**31))
def test_single_carrier_loopback_property(mod, sps, n_sym, seed):
    cfg = SingleCarrierConfig(mod, sps, 2000.0)
    b = _bits(mod.bits_per_symbol * n_sym, seed)
    np.testing.assert_array_equal(demodulate(modulate(b, cfg, S), cfg), b)


def test_config_validation():
    with pytest.raises(ParameterError):
        SingleCarrierConfig("QPSK", 0)
    with pytest.raises(ParameterError):
        SingleCarrierConfig("QPSK", 2, 0, "gauss")
    with pytest.raises(ValueError):
        SingleCarrierConfig("128QAM")


# --- OFDM ---


def test_ofdm_symbol_length():
    cfg = OfdmConfig(64, "QPSK")
    assert cfg.cp_len == 16
    x = ofdm_modulate(np.ones((1, 63)), cfg)
    assert len(x) == 80


def test_ofdm_single_bin_matches_idft_definition():
    cfg = OfdmConfig(64, "BPSK", occupied_bins=(5,))
    x = ofdm_modulate(np.ones((1, 1)), cfg).samples
    n = np.arange(64)
    tone = np.exp(2j * np.pi * 5 * n / 64) / 64
    np.testing.assert_allclose(x[16:], tone, atol=1e-15)
    np.testing.assert_allclose(x[:16], tone[-16:], atol=1e-15)


def test_ofdm_grid_round_trip():
    cfg = OfdmConfig(128, "8PSK")
    rng = np.random.default_rng(1)
    grid = np.exp(1j * rng.uniform(0, 2 * np.pi, (5, 127)))
    np.testing.assert_allclose(ofdm_demodulate(ofdm_modulate(grid, cfg), cfg), grid, atol=1e-9)


def test_ofdm_truncates_partial_symbols():
    cfg = OfdmConfig(64)
    x = ofdm_modulate(np.ones((3, 63)), cfg)
    assert ofdm_demodulate(x[: int(2.5 * 80)], cfg).shape == (2, 63)


def test_ofdm_too_short():
    cfg = OfdmConfig(64)
    with pytest.raises(InsufficientDataError):
        ofdm_demodulate(IQStream(np.zeros(79), 1.0), cfg)


def test_ofdm_sync_offset():
    cfg = OfdmConfig(64, "QPSK")
    b = _bits(cfg.bits_per_symbol * 2)
    x = IQStream(np.concatenate([np.zeros(7), ofdm_modulate_bits(b, cfg).samples]), 1.0)
    np.testing.assert_array_equal(ofdm_demodulate_bits(x, cfg, sync_offset=7), b)


@pytest.mark.parametrize("n", [64, 128, 256])
@pytest.mark.parametrize("mod", ["BPSK", "QPSK", "8PSK"])
def test_ofdm_loopback(n, mod):
    cfg = OfdmConfig(n, mod)
    b = _bits(cfg.bits_per_symbol * 3)
    np.testing.assert_array_equal(demodulate(modulate(b, cfg, 5e6), cfg), b)


def test_ofdm_rejects_qam_bins_and_bad_fft():
    with pytest.raises(ParameterError):
        OfdmConfig(64, "16QAM")
    with pytest.raises(ParameterError):
        OfdmConfig(100)
    with pytest.raises(ParameterError):
        OfdmConfig(64, occupied_bins=(0, 1))


def test_config_dict_round_trip():
    for cfg in (SingleCarrierConfig("32QAM", 10, 1000.0), OfdmConfig(256, "8PSK")):
        assert config_from_dict(cfg.to_dict()) == cfg


# --- channel ---


def test_identity_channel_is_identity():
    x = modulate(_bits(200), SingleCarrierConfig("QPSK", 4), S)
    np.testing.assert_array_equal(apply_channel(x, ChannelModel.identity()).samples, x.samples)


def test_awgn_power_matches_snr():
    x = IQStream(np.ones(200_000, dtype=complex), S)
    y = apply_channel(x, ChannelModel(snr_db=10.0, seed=4))
    noise = y.samples - x.samples
    assert np.mean(np.abs(noise) ** 2) == pytest.approx(0.1, rel=0.02)


def test_channel_seeded():
    x = IQStream(np.ones(100, dtype=complex), S)
    a = apply_channel(x, ChannelModel(snr_db=5, seed=9)).samples
    b = apply_channel(x, ChannelModel(snr_db=5, seed=9)).samples
    np.testing.assert_array_equal(a, b)


def test_cfo_rotation_and_multipath():
    x = IQStream(np.r_[1.0, np.zeros(9)], S)
    y = apply_channel(x, ChannelModel(taps=(1.0, 0.5j))).samples
    np.testing.assert_allclose(y[:3], [1.0, 0.5j, 0.0])
    z = apply_channel(IQStream(np.ones(4), S), ChannelModel(cfo_hz=S / 4)).samples
    np.testing.assert_allclose(z, [1, 1j, -1, -1j], atol=1e-12)


def test_nlos_taps_normalised():
    ch = ChannelModel.nlos(seed=3)
    assert np.sum(np.abs(ch.taps) ** 2) == pytest.approx(1.0)
    assert ch.snr_db == 15.0


# --- schedules ---


def test_schedule_stream_segments_and_labels():
    cfgs = [SingleCarrierConfig("QPSK", 10), OfdmConfig(64, "BPSK")]
    sched = TransmitterSchedule(((cfgs[0], 0), (cfgs[1], 1), (cfgs[0], 0)), 0.01, 100e3)
    x, track = generate_schedule_stream(sched, payload_seed=1)
    assert len(x) == 3000
    assert list(track) == [(0, 0), (1000, 1), (2000, 0)]
    assert track.label_at(999) == 0 and track.label_at(1000) == 1
    with pytest.raises(IndexError):
        track.label_at(3000)
    for i, (s, _) in enumerate(track):
        cfg = track.configs[i]
        n_sym = 1000 // cfg.symbol_len
        seg = x[s: s + n_sym * cfg.symbol_len]
        np.testing.assert_array_equal(demodulate(seg, cfg), track.payloads[i])


def test_ofdm_segment_unit_power():
    cfg = OfdmConfig(256, "QPSK")
    sched = TransmitterSchedule(((cfg, 0),), 0.032, 100e3)
    x, _ = generate_schedule_stream(sched, 0)
    n = (len(x) // cfg.symbol_len) * cfg.symbol_len
    body = x.samples[:n].reshape(-1, cfg.symbol_len)[:, cfg.cp_len:]
    assert np.mean(np.abs(body) ** 2) == pytest.approx(1.0, rel=1e-9)


def test_schedule_deterministic():
    cfgs = [SingleCarrierConfig(m, 10) for m in ("BPSK", "QPSK", "8PSK")]
    a = random_schedule(cfgs, 8, 0.01, S, seed=5)
    b = random_schedule(cfgs, 8, 0.01, S, seed=5)
    assert a == b
    labels = [l for _, l in a.entries]
    assert all(p != q for p, q in zip(labels, labels[1:]))
    xa, _ = generate_schedule_stream(a, 2)
    xb, _ = generate_schedule_stream(b, 2)
    np.testing.assert_array_equal(xa.samples, xb.samples)


def test_label_track_shift():
    t = LabelTrack((0, 100), (3, 4), 100)
    s = t.shifted(30)
    assert s.starts == (-30, 70)
    assert s.label_at(0) == 3 and s.label_at(70) == 4


def test_iqstream_validation():
    with pytest.raises(InputShapeError):
        IQStream(np.zeros((2, 2)), 1.0)
    with pytest.raises(ParameterError):
        IQStream(np.zeros(2), 0.0)
    s = IQStream(np.arange(10), 5.0)
    assert s.duration_s == 2.0
    assert not s.samples.flags.writeable
