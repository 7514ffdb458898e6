"""Mini-batch Adam training with hand-written backpropagation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ParameterError, TrainingError
from .arch import FloatParams, RfnetArch, init_params
from .layers import softmax

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    l2_lambda: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if self.l2_lambda < 0:
            raise ParameterError("l2_lambda must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class TrainResult:
    params: FloatParams
    loss_history: list[float] = field(default_factory=list)
    accuracy_history: list[float] = field(default_factory=list)


def _im2col(x: np.ndarray, f: int) -> np.ndarray:
    n, h, w, depth = x.shape
    win = sliding_window_view(x, (f, f), axis=(1, 2))  # (n, ho, wo, depth, f, f)
    return win.reshape(n * (h - f + 1) * (w - f + 1), depth * f * f)


def forward_batch(arch: RfnetArch, params: FloatParams, x: np.ndarray):
    """Batched forward pass; returns ``(logits, cache)`` for :func:`backward`."""
    n = x.shape[0]
    cache = {"cols": [], "pre": [], "shapes": [], "acts": []}
    a = x
    for (w, b) in params.conv:
        c, f, _, depth = w.shape
        ho, wo = a.shape[1] - f + 1, a.shape[2] - f + 1
        cols = _im2col(a, f)
        wm = w.transpose(0, 3, 1, 2).reshape(c, -1)
        z = (cols @ wm.T + b).reshape(n, ho, wo, c)
        cache["cols"].append(cols)
        cache["shapes"].append(a.shape)
        cache["pre"].append(z)
        a = np.maximum(z, 0)
    a = a.reshape(n, -1)
    for li, (w, b) in enumerate(params.dense):
        cache["acts"].append(a)
        z = a @ w.T + b
        if li < len(params.dense) - 1:
            cache["pre"].append(z)
            a = np.maximum(z, 0)
        else:
            a = z
    return a, cache


def backward(arch: RfnetArch, params: FloatParams, cache, dlogits: np.ndarray) -> FloatParams:
    n = dlogits.shape[0]
    nconv = len(params.conv)
    g_dense = []
    g = dlogits
    for li in range(len(params.dense) - 1, -1, -1):
        w, _ = params.dense[li]
        a = cache["acts"][li]
        g_dense.append((g.T @ a, g.sum(axis=0)))
        if li == 0 and nconv == 0:
            break
        g = g @ w
        if li > 0:
            g = g * (cache["pre"][nconv + li - 1] > 0)
    g_dense.reverse()

    g_conv = []
    if nconv:
        g = g.reshape(cache["pre"][nconv - 1].shape) * (cache["pre"][nconv - 1] > 0)
        for li in range(nconv - 1, -1, -1):
            w, _ = params.conv[li]
            c, f, _, depth = w.shape
            gf = g.reshape(-1, c)
            cols = cache["cols"][li]
            gw = (gf.T @ cols).reshape(c, depth, f, f).transpose(0, 2, 3, 1)
            g_conv.append((gw, gf.sum(axis=0)))
            if li == 0:
                break
            _, h, wd, _ = cache["shapes"][li]
            ho, wo = h - f + 1, wd - f + 1
            dcols = (gf @ w.transpose(0, 3, 1, 2).reshape(c, -1)).reshape(n, ho, wo, depth, f, f)
            dx = np.zeros((n, h, wd, depth))
            for i in range(f):
                for j in range(f):
                    dx[:, i:i + ho, j:j + wo, :] += dcols[..., i, j]
            g = dx * (cache["pre"][li - 1] > 0)
        g_conv.reverse()
    return FloatParams(tuple(g_conv), tuple(g_dense))


def loss_and_grads(arch: RfnetArch, params: FloatParams, x: np.ndarray, y: np.ndarray, l2_lambda: float):
    """Mean categorical cross-entropy plus ``l2_lambda * ||weights||^2`` and its gradient."""
    logits, cache = forward_batch(arch, params, x)
    p = softmax(logits)
    n = x.shape[0]
    data_loss = -np.mean(np.log(p[np.arange(n), y] + 1e-300))
    reg = l2_lambda * sum(np.sum(w ** 2) for w, _ in params.conv + params.dense)
    d = p.copy()
    d[np.arange(n), y] -= 1.0
    grads = backward(arch, params, cache, d / n)
    if l2_lambda:
        grads = FloatParams(
            tuple((gw + 2 * l2_lambda * w, gb) for (gw, gb), (w, _) in zip(grads.conv, params.conv)),
            tuple((gw + 2 * l2_lambda * w, gb) for (gw, gb), (w, _) in zip(grads.dense, params.dense)),
        )
    return float(data_loss + reg), grads, logits


class _Adam:
    def __init__(self, arrays, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays, grads):
        c = self.cfg
        self.t += 1
        lr = c.learning_rate * np.sqrt(1 - c.beta2 ** self.t) / (1 - c.beta1 ** self.t)
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            a -= lr * m / (np.sqrt(v) + c.eps)


def _check_data(arch: RfnetArch, x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ParameterError("empty training set")
    if x.shape[1:] != (arch.input_h, arch.input_w, 2) or len(y) != len(x):
        raise ParameterError(f"dataset shape {x.shape} / {y.shape} does not match the architecture")
    if y.min() < 0 or y.max() >= arch.n_classes:
        raise ParameterError("label out of range")
    return x, y


def train_online(
    source: Callable[[int], tuple[np.ndarray, np.ndarray]],
    arch: RfnetArch,
    cfg: TrainConfig = TrainConfig(),
    init: FloatParams | None = None,
) -> TrainResult:
    """Fit RFNet drawing the data for epoch ``e`` from ``source(e)``.

    A fresh draw per epoch trains on far more distinct examples than fit in
    memory at once. Optimizer state carries across epochs.
    """
    params = init if init is not None else init_params(arch, cfg.seed)
    arrays = [a.copy() for a in params.arrays()]
    params = FloatParams.from_arrays(arch, arrays)
    opt = _Adam(arrays, cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    result = TrainResult(params)
    for epoch in range(cfg.epochs):
        x, y = _check_data(arch, *source(epoch))
        order = rng.permutation(len(x))
        tot, correct = 0.0, 0
        for lo in range(0, len(x), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads, logits = loss_and_grads(arch, params, x[idx], y[idx], cfg.l2_lambda)
            g = grads.arrays()
            if not np.isfinite(loss) or not all(np.isfinite(a).all() for a in g):
                raise TrainingError(f"training diverged in epoch {epoch} (loss {loss})")
            with np.errstate(over="ignore", invalid="ignore"):
                opt.step(arrays, g)
            if not all(np.isfinite(a).all() for a in arrays):
                raise TrainingError(f"parameters became non-finite in epoch {epoch}")
            tot += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == y[idx]))
        result.loss_history.append(tot / len(x))
        result.accuracy_history.append(correct / len(x))
        log.info("epoch %d loss %.4f acc %.3f", epoch, result.loss_history[-1], result.accuracy_history[-1])
    result.params = params
    return result


def train(
    x: np.ndarray,
    y: np.ndarray,
    arch: RfnetArch,
    cfg: TrainConfig = TrainConfig(),
    init: FloatParams | None = None,
) -> TrainResult:
    """Fit RFNet on tensors ``x`` of shape ``(n, h, w, 2)`` with integer labels ``y``."""
    x, y = _check_data(arch, x, y)
    return train_online(lambda epoch: (x, y), arch, cfg, init)


def accuracy(arch: RfnetArch, params: FloatParams, x: np.ndarray, y: np.ndarray) -> float:
    from .layers import predict_float

    return float(np.mean(predict_float(arch, params, x) == np.asarray(y)))
