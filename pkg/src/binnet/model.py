"""Runs an :class:`ArchSpec` as a trainable network."""
from __future__ import annotations

import numpy as np

from .arch.spec import INPUT, ArchSpec, LayerSpec
from .errors import ShapeMismatch
from .nn import layers as L
from .nn.autograd import Parameter, Tape, Var
from .nn.binary import ScalingFactors, SteConfig


def _make_module(layer: LayerSpec, in_channels: int, ste: SteConfig, scaling: ScalingFactors | None, rng, dtype):
    k = layer.kind
    if k == "conv":
        args = (in_channels, layer.out_channels, layer.kernel, layer.stride, layer.padding, layer.dilation)
        if layer.is_binary:
            # the graph carries an explicit sign layer in front of every binary conv
            return L.BinaryConv2d(*args, ste=ste, scaling=scaling, sign_input=False, rng=rng, dtype=dtype)
        return L.Conv2d(*args, bias=layer.bias, rng=rng, dtype=dtype)
    if k == "bn":
        return L.BatchNorm2d(in_channels, dtype=dtype)
    if k == "sign":
        return L.Sign(ste)
    if k == "relu":
        return L.ReLU()
    if k == "clip":
        return L.Clip()
    if k == "maxpool":
        return L.MaxPool2d(layer.kernel, layer.stride, layer.padding)
    if k == "avgpool":
        return L.AvgPool2d(layer.kernel, layer.stride, layer.padding)
    if k == "gap":
        return L.GlobalAvgPool()
    if k == "dense":
        return L.Dense(in_channels, layer.out_channels, bias=layer.bias, rng=rng, dtype=dtype)
    return None  # merges are applied inline


class Model:
    def __init__(self, spec: ArchSpec, seed: int = 0, dtype=np.float32, ste: SteConfig = SteConfig(),
                 scaling: ScalingFactors | None = None):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        shapes = spec.infer_shapes()
        self.modules: dict[str, L.Module] = {}
        for layer in spec.layers:
            mod = _make_module(layer, shapes[layer.inputs[0]][1], ste, scaling, rng, self.dtype)
            if mod is not None:
                self.modules[layer.name] = mod
                for attr, p in vars(mod).items():
                    if isinstance(p, Parameter):
                        p.name = f"{layer.name}.{attr}"
        self.training = True

    @property
    def arch_hash(self) -> int:
        return self.spec.arch_hash()

    def forward(self, x: Var | np.ndarray, tape: Tape | None = None) -> Var:
        if not isinstance(x, Var):
            x = Var(np.asarray(x, dtype=self.dtype))
        if x.data.shape[1:] != tuple(self.spec.input_shape):
            raise ShapeMismatch(f"{self.spec.name} expects inputs of shape {self.spec.input_shape}, "
                                f"got {x.data.shape[1:]}")
        values = {INPUT: x}
        for layer in self.spec.layers:
            ins = [values[i] for i in layer.inputs]
            if layer.kind == "add":
                out = ins[0]
                for other in ins[1:]:
                    out = L.add(out, other, tape)
            elif layer.kind == "concat":
                out = L.concat(ins, tape)
            else:
                out = self.modules[layer.name](ins[0], tape)
            values[layer.name] = out
        return values[self.spec.output]

    __call__ = forward

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        out = []
        for mod in self.modules.values():
            out.extend((p.name, p) for p in mod.parameters())
        return out

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        """BatchNorm running statistics."""
        out = []
        for name, mod in self.modules.items():
            if isinstance(mod, L.BatchNorm2d):
                out += [(f"{name}.running_mean", mod.state.running_mean),
                        (f"{name}.running_var", mod.state.running_var)]
        return out

    def binary_convs(self) -> dict[str, L.BinaryConv2d]:
        return {n: m for n, m in self.modules.items() if isinstance(m, L.BinaryConv2d)}

    def set_binarize(self, on: bool, fp_activation: str = "relu") -> None:
        """Switch between the binary network and its full-precision twin."""
        for mod in self.modules.values():
            if isinstance(mod, (L.BinaryConv2d, L.Sign)):
                mod.binarize = on
            if isinstance(mod, L.Sign):
                mod.fp_activation = fp_activation

    def set_packed(self, on: bool) -> None:
        for mod in self.binary_convs().values():
            mod.packed = on
            if on:
                mod.pack_weights()

    def train(self, mode: bool = True):
        self.training = mode
        for mod in self.modules.values():
            mod.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Logits in eval mode without recording a tape."""
        was = self.training
        self.eval()
        try:
            return np.concatenate([self.forward(x[i:i + batch_size]).data for i in range(0, len(x), batch_size)])
        finally:
            self.train(was)
