"""Latency budget of a polymorphic receiver at 5 MS/s.

The receiver fills one buffer of B samples while the previous buffer is being
classified and demodulated, so it keeps up only if the whole pipeline finishes
within the time of two buffers.
"""
import numpy as np

from polyrf.budget import (
    BudgetInputs,
    budget_table,
    inferences_per_switch,
    min_buffer_size,
    pipelined_cycles,
)
from polyrf.rfnet import RfnetArch

S = 5e6  # samples/s

# RFNet latency of about 16 ms sets the smallest usable buffer
t_cn = 0.016
B_min = min_buffer_size(S, t_cn)
print("smallest buffer for T_cn = 16 ms:", B_min, "samples")
print("switching time it can track:     ", 1e3 * (B_min - 1) / S, "ms")

# the switching experiment runs with a much larger buffer
row = budget_table(BudgetInputs(S, 250_000, t_cn_s=0.017, switch_time_s=0.25))
for k in ("load", "slack", "inferences_per_switch", "expected_misaligned_samples", "misaligned_fraction"):
    print(f"{k:28s} {row[k]:.6g}")

# sweep the classifier latency, watching where a 50k-sample buffer stops keeping up
for t in np.arange(0.012, 0.024, 0.002):
    r = budget_table(BudgetInputs(S, 50_000, t_cn_s=t))
    print(f"T_cn {1e3 * t:4.1f} ms  load {r['load']:.2f}  {'ok' if r['feasible'] else 'INFEASIBLE'}")

# more inferences per switch means a smaller share of each segment lost to the stale config
for B in (50_000, 125_000, 250_000, 625_000):
    n = inferences_per_switch(0.25, B, S)
    print(f"B {B:7d}  inferences/switch {n:5.1f}  worst loss/segment {1 / n:.0%}")

# cycle count of the line-buffered pipeline for the two architectures used later
for arch in (RfnetArch(m=1, c=(25,), input_w=20, input_h=20, n_classes=18),
             RfnetArch(m=2, c=(25, 25), input_w=20, input_h=20, n_classes=9)):
    print(arch.m, "conv layer(s):", pipelined_cycles(arch), "cycles, at 100 MHz",
          1e6 * pipelined_cycles(arch) / 100e6, "us")
