"""Line and window buffers: streaming a 2D convolution one sample at a time.

Samples arrive in raster order. F rows are kept in the line buffer and a FxF
window slides along them, so one output is ready per tick once the buffers
are primed. The result must match an ordinary valid convolution exactly, in
float and in 32-bit fixed point.
"""
import numpy as np

from polyrf.rfnet import Q32_10, conv2d_valid, conv2d_valid_fixed, quantize_array, streaming_conv

rng = np.random.default_rng(7)

# the 4x4 input, 3x3 filter case
x = rng.standard_normal((4, 4, 2))
filters = rng.standard_normal((1, 3, 3, 2))
biases = rng.standard_normal(1)

res = streaming_conv(x, filters, biases)
print("line buffer full after", res.line_fill_cycles, "samples")
print("first window loaded in", res.window_fill_cycles, "more ticks")
print("total ticks", res.cycle_count, "for", res.output.shape[0] * res.output.shape[1], "outputs")
print("float max |diff|:", np.abs(res.output - conv2d_valid(x, filters, biases)).max())

# same thing on int32 codes, where equality has to be bitwise
xq, fq, bq = (quantize_array(a, Q32_10) for a in (x, filters, biases))
rq = streaming_conv(xq, fq, bq, fmt=Q32_10)
print("fixed outputs identical:", np.array_equal(rq.output, conv2d_valid_fixed(xq, fq, bq, Q32_10)))

# a full-size RFNet layer: 20x20 I/Q tensor, 25 filters
x = rng.standard_normal((20, 20, 2))
filters = 0.3 * rng.standard_normal((25, 3, 3, 2))
biases = np.zeros(25)
res = streaming_conv(x, filters, biases)
print("20x20x2 -> 18x18x25 in", res.cycle_count, "ticks, equal:",
      np.array_equal(res.output, conv2d_valid(x, filters, biases)))
