"""RFNet: a small ConvNet over I/Q tensors, in float and 32-bit fixed point."""
from .arch import FloatParams, RfnetArch, RfnetModel, init_params, linear_baseline_params
from .fixed import (
    Q32_10,
    FixedFormat,
    QuantizedParams,
    conv2d_valid_fixed,
    dequantize_array,
    forward_fixed,
    logits_fixed,
    predict_fixed,
    quantize,
    quantize_array,
)
from .io import load_model, read_header, save_model
from .layers import (
    ClassPrediction,
    conv2d_valid,
    dense_forward,
    forward_float,
    logits_float,
    predict_float,
    relu,
    softmax,
)
from .streaming import StreamingResult, conv_cycles, streaming_conv
from .train import TrainConfig, TrainResult, accuracy, loss_and_grads, train, train_online


def predict(model: RfnetModel, x, mode: str = "float"):
    """Batch argmax with the model's float or fixed-point parameters."""
    if mode == "fixed" or isinstance(model.params, QuantizedParams):
        q = model.params if isinstance(model.params, QuantizedParams) else quantize(model.params)
        return predict_fixed(model.arch, q, x)
    return predict_float(model.arch, model.params, x)


def classify(model: RfnetModel, t, mode: str = "float") -> ClassPrediction:
    if mode == "fixed" or isinstance(model.params, QuantizedParams):
        q = model.params if isinstance(model.params, QuantizedParams) else quantize(model.params)
        return forward_fixed(model.arch, q, t)
    return forward_float(model.arch, model.params, t)


__all__ = [name for name in dir() if not name.startswith("_")]
