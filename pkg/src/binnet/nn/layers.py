"""Layer modules wrapping the functional ops with tape bookkeeping."""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..kernels import ConvGeometry
from ..tensor import BitTensor, sign, sign_quantize
from . import functional as F
from .autograd import Parameter, Tape, Var
from .binary import (ScalingFactors, SteConfig, binary_conv_backward, binary_conv_forward, scaling_multiplier,
                     sign_backward)


class Module:
    training = True

    def forward(self, x: Var, tape: Tape | None = None) -> Var:
        raise NotImplementedError

    def __call__(self, x: Var, tape: Tape | None = None) -> Var:
        return self.forward(x, tape)

    def parameters(self) -> list[Parameter]:
        return [v for v in vars(self).values() if isinstance(v, Parameter)]

    def train(self, mode: bool = True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)


def _kaiming(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, dilation=1,
                 bias=False, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        k = kernel_size
        self.geometry = ConvGeometry(stride, padding, dilation)
        self.weight = Parameter(_kaiming(rng, (out_channels, in_channels, k, k), in_channels * k * k, dtype),
                                "fp-conv weight")
        self.bias = Parameter(np.zeros(out_channels, dtype), "bias") if bias else None

    def parameters(self):
        return [p for p in (self.weight, self.bias) if p is not None]

    def forward(self, x, tape=None):
        b = self.bias.data if self.bias is not None else None
        y, ctx = F.conv2d_forward(x.data, self.weight.data, b, self.geometry)
        out = Var(y)
        if tape is not None:
            def backward(g):
                gx, gw, gb = F.conv2d_backward(ctx, g)
                return (gx, gw) + ((gb,) if b is not None else ())
            inputs = (x, self.weight) + ((self.bias,) if b is not None else ())
            tape.record("conv2d", out, inputs, backward)
        return out


class BinaryConv2d(Module):
    """Convolution with sign-binarized weights (and, by default, inputs).

    With ``binarize=False`` the layer behaves as a full-precision conv on the
    latent weights; this is how full-precision pre-training runs. With
    ``packed=True`` inference runs through the bit-packed xnor kernels.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, dilation=1,
                 ste: SteConfig = SteConfig(), scaling: ScalingFactors | None = None,
                 sign_input: bool = True, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        k = kernel_size
        self.geometry = ConvGeometry(stride, padding, dilation)
        init = _kaiming(rng, (out_channels, in_channels, k, k), in_channels * k * k, dtype)
        self.weight = Parameter(np.clip(init, -1, 1), "binary-conv weight")
        self.ste = ste
        self.scaling = scaling or ScalingFactors()
        self.sign_input = sign_input
        self.binarize = True
        self.packed = False
        self.packed_weight: BitTensor | None = None

    def pack_weights(self) -> BitTensor:
        self.packed_weight = sign_quantize(self.weight.data)
        return self.packed_weight

    def _forward_packed(self, x):
        bits = sign_quantize(x.data)
        w = self.packed_weight if self.packed_weight is not None else self.pack_weights()
        y = kernels.binary_conv2d(bits, w, self.geometry).astype(x.data.dtype)
        mult = scaling_multiplier(x.data, self.weight.data, self.scaling, self.geometry)
        return Var(y if mult is None else y * mult)

    def forward(self, x, tape=None):
        if not self.binarize:
            y, ctx = F.conv2d_forward(x.data, self.weight.data, None, self.geometry, pad_value=0.0)
            out = Var(y)
            if tape is not None:
                tape.record("conv2d", out, (x, self.weight), lambda g: F.conv2d_backward(ctx, g)[:2])
            return out
        if self.packed and tape is None:
            return self._forward_packed(x)
        y, ctx = binary_conv_forward(x.data, self.weight.data, self.ste, self.scaling, self.geometry,
                                     self.sign_input)
        out = Var(y)
        if tape is not None:
            tape.record("binary_conv2d", out, (x, self.weight), lambda g: binary_conv_backward(ctx, g))
        return out


class BatchNorm2d(Module):
    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype), "bn-gamma")
        self.beta = Parameter(np.zeros(channels, dtype), "bn-beta")
        self.state = F.BatchNormState(np.zeros(channels, dtype), np.ones(channels, dtype), momentum)

    def forward(self, x, tape=None):
        mode = "train" if self.training else "eval"
        y, ctx = F.batchnorm_forward(x.data, self.gamma.data, self.beta.data, self.eps, mode, self.state)
        out = Var(y)
        if tape is not None:
            tape.record("batchnorm", out, (x, self.gamma, self.beta), lambda g: F.batchnorm_backward(ctx, g))
        return out


class Sign(Module):
    """Binary activation with a surrogate gradient.

    When ``binarize`` is off it stands in as the full-precision activation
    named by ``fp_activation`` (``relu`` or ``clip``).
    """

    def __init__(self, ste: SteConfig = SteConfig(), fp_activation: str = "relu"):
        self.ste = ste
        self.binarize = True
        self.fp_activation = fp_activation

    def forward(self, x, tape=None):
        if not self.binarize:
            return (relu if self.fp_activation == "relu" else clip)(x, tape)
        out = Var(sign(x.data))
        if tape is not None:
            r = x.data
            tape.record("sign", out, (x,), lambda g: (sign_backward(r, g, self.ste),))
        return out


class Dense(Module):
    def __init__(self, in_features, out_features, bias=True, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Parameter(rng.uniform(-bound, bound, (out_features, in_features)).astype(dtype),
                                "dense weight")
        self.bias = Parameter(np.zeros(out_features, dtype), "bias") if bias else None

    def parameters(self):
        return [p for p in (self.weight, self.bias) if p is not None]

    def forward(self, x, tape=None):
        b = self.bias.data if self.bias is not None else None
        y, ctx = F.dense_forward(x.data, self.weight.data, b)
        out = Var(y)
        if tape is not None:
            def backward(g):
                gx, gw, gb = F.dense_backward(ctx, g)
                return (gx, gw) + ((gb,) if b is not None else ())
            tape.record("dense", out, (x, self.weight) + ((self.bias,) if b is not None else ()), backward)
        return out


def relu(x: Var, tape: Tape | None = None) -> Var:
    y, mask = F.relu_forward(x.data)
    out = Var(y)
    if tape is not None:
        tape.record("relu", out, (x,), lambda g: (F.relu_backward(mask, g),))
    return out


def clip(x: Var, tape: Tape | None = None) -> Var:
    y, mask = F.clip_forward(x.data)
    out = Var(y)
    if tape is not None:
        tape.record("clip", out, (x,), lambda g: (F.clip_backward(mask, g),))
    return out


class ReLU(Module):
    def forward(self, x, tape=None):
        return relu(x, tape)


class Clip(Module):
    def forward(self, x, tape=None):
        return clip(x, tape)


class MaxPool2d(Module):
    def __init__(self, kernel_size, stride=None, padding=0):
        self.kernel_size, self.stride, self.padding = kernel_size, stride or kernel_size, padding

    def forward(self, x, tape=None):
        y, ctx = F.maxpool2d_forward(x.data, self.kernel_size, self.stride, self.padding)
        out = Var(y)
        if tape is not None:
            tape.record("maxpool", out, (x,), lambda g: (F.maxpool2d_backward(ctx, g),))
        return out


class AvgPool2d(Module):
    def __init__(self, kernel_size, stride=None, padding=0):
        self.kernel_size, self.stride, self.padding = kernel_size, stride or kernel_size, padding

    def forward(self, x, tape=None):
        y, ctx = F.avgpool2d_forward(x.data, self.kernel_size, self.stride, self.padding)
        out = Var(y)
        if tape is not None:
            tape.record("avgpool", out, (x,), lambda g: (F.avgpool2d_backward(ctx, g),))
        return out


class GlobalAvgPool(Module):
    def forward(self, x, tape=None):
        y, shape = F.global_avgpool_forward(x.data)
        out = Var(y)
        if tape is not None:
            tape.record("global_avgpool", out, (x,), lambda g: (F.global_avgpool_backward(shape, g),))
        return out


def add(a: Var, b: Var, tape: Tape | None = None) -> Var:
    out = Var(a.data + b.data)
    if tape is not None:
        tape.record("add", out, (a, b), lambda g: (g, g))
    return out


def concat(xs: list[Var], tape: Tape | None = None) -> Var:
    out = Var(np.concatenate([x.data for x in xs], axis=1))
    if tape is not None:
        bounds = np.cumsum([x.data.shape[1] for x in xs])[:-1]
        tape.record("concat", out, tuple(xs), lambda g: tuple(np.split(g, bounds, axis=1)))
    return out


def softmax_cross_entropy(logits: Var, labels: np.ndarray, tape: Tape | None = None) -> Var:
    loss, ctx = F.softmax_cross_entropy_forward(logits.data, labels)
    out = Var(loss)
    if tape is not None:
        tape.record("softmax_xent", out, (logits,), lambda g: (F.softmax_cross_entropy_backward(ctx, g),))
    return out
