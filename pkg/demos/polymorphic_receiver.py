"""A polymorphic OFDM receiver against an Oracle that always knows the config.

The transmitter hops among 9 OFDM configs (FFT 64/128/256 x BPSK/QPSK/8PSK)
every 250 ms at 5 MS/s. The receiver classifies the head of each 250k-sample
buffer and demodulates the whole buffer with that config, so every switch
costs on average half a buffer of stale demodulation.
"""
import numpy as np

from polyrf.budget import expected_misaligned_samples, inferences_per_switch
from polyrf.polyrx import ClassCatalog, PerfectClassifier, WrongClassifier, switching_trial
from polyrf.waveform import ChannelModel

catalog = ClassCatalog.ofdm_9()
B, T_sw, S = 250_000, 0.25, 5e6
print(inferences_per_switch(T_sw, B, S), "inferences per switch")
print("expected loss per switch:", expected_misaligned_samples(B) / (T_sw * S))

# a perfect classifier isolates the cost of buffer/switch misalignment
ratios, phases = [], []
for seed in range(8):
    t = switching_trial(catalog, lambda tr: PerfectClassifier(tr, len(catalog)), seed=seed)
    ratios.append(t.report.ratio)
    phases.append(t.phase)
    print(f"seed {seed}  phase {t.phase:6d}  ratio {t.report.ratio:.3f}")
print("mean", np.mean(ratios), "min", np.min(ratios))

# the loss grows with the distance from the buffer head to the switch
order = np.argsort(phases)
print("phase-sorted ratios:", np.round(np.array(ratios)[order], 3))

# through NLOS multipath at 15 dB the Oracle itself loses bits; the ratio stays put
t = switching_trial(catalog, lambda tr: PerfectClassifier(tr, len(catalog)), seed=0, channel=ChannelModel.nlos())
print("NLOS ratio", round(t.report.ratio, 3), " oracle throughput", round(t.report.oracle_throughput_bps / 1e6, 2), "Mb/s")

# an always-wrong classifier demodulates everything and recovers nothing
t = switching_trial(catalog, lambda tr: WrongClassifier(tr, len(catalog)), seed=0)
print("wrong-classifier ratio", t.report.ratio)

print(t.report.to_csv())
