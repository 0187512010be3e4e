"""Declarative layer graphs."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from ..errors import DimMismatch, InvalidConfig, UnresolvedGeometry
from ..tensor import conv_output_size

KINDS = ("conv", "bn", "sign", "relu", "clip", "maxpool", "avgpool", "gap", "dense", "add", "concat")
MERGE_KINDS = ("add", "concat")
INPUT = "input"


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    inputs: tuple[str, ...]
    out_channels: int | None = None
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    dilation: int = 1
    precision: str = "fp"
    bias: bool = False
    block: str = ""
    downsampling: bool = False

    @property
    def is_binary(self) -> bool:
        return self.precision == "binary"


@dataclass(frozen=True)
class ArchSpec:
    name: str
    input_shape: tuple[int, int, int]  # (C, H, W)
    layers: tuple[LayerSpec, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        seen = {INPUT}
        for layer in self.layers:
            if layer.kind not in KINDS:
                raise InvalidConfig(f"unknown layer kind {layer.kind!r}")
            if layer.name in seen:
                raise InvalidConfig(f"duplicate layer name {layer.name!r}")
            missing = [i for i in layer.inputs if i not in seen]
            if missing or not layer.inputs:
                # inputs must precede their consumer, which also rules out cycles
                raise InvalidConfig(f"layer {layer.name!r} has unresolved inputs {missing or '()'}")
            if layer.kind not in MERGE_KINDS and len(layer.inputs) != 1:
                raise InvalidConfig(f"layer {layer.name!r} of kind {layer.kind} takes one input")
            seen.add(layer.name)

    def __getitem__(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    @property
    def output(self) -> str:
        return self.layers[-1].name

    def of_kind(self, kind: str, precision: str | None = None) -> list[LayerSpec]:
        return [l for l in self.layers if l.kind == kind and (precision is None or l.precision == precision)]

    def shortcut_edges(self) -> list[tuple[str, str, str]]:
        """(source, merge layer, kind) for every merge input."""
        return [(src, l.name, l.kind) for l in self.layers if l.kind in MERGE_KINDS for src in l.inputs]

    def consumers(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {INPUT: []}
        for l in self.layers:
            out.setdefault(l.name, [])
            for i in l.inputs:
                out[i].append(l.name)
        return out

    def infer_shapes(self, batch: int = 1) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {INPUT: (batch,) + tuple(self.input_shape)}
        for l in self.layers:
            shapes[l.name] = layer_output_shape(l, [shapes[i] for i in l.inputs])
        return shapes

    def to_dict(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape),
                "layers": [asdict(l) for l in self.layers]}

    def arch_hash(self) -> int:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def layer_output_shape(layer: LayerSpec, in_shapes: list[tuple[int, ...]]) -> tuple[int, ...]:
    if not in_shapes or any(s is None for s in in_shapes):
        raise UnresolvedGeometry(f"input geometry of {layer.name!r} is unknown")
    s = in_shapes[0]
    k = layer.kind
    if k in ("conv", "maxpool", "avgpool"):
        if len(s) != 4:
            raise DimMismatch(f"{layer.name}: expected NCHW input, got {s}")
        n, c, h, w = s
        oh = conv_output_size(h, layer.kernel, layer.stride, layer.padding, layer.dilation)
        ow = conv_output_size(w, layer.kernel, layer.stride, layer.padding, layer.dilation)
        if oh < 1 or ow < 1:
            raise UnresolvedGeometry(f"{layer.name}: spatial output {oh}x{ow}")
        return (n, layer.out_channels if k == "conv" else c, oh, ow)
    if k == "gap":
        return s[:2]
    if k == "dense":
        return (s[0], layer.out_channels)
    if k == "add":
        if any(t != s for t in in_shapes):
            raise DimMismatch(f"{layer.name}: add of mismatched shapes {in_shapes}")
        return s
    if k == "concat":
        if any(t[:1] + t[2:] != s[:1] + s[2:] for t in in_shapes):
            raise DimMismatch(f"{layer.name}: concat of mismatched shapes {in_shapes}")
        return (s[0], sum(t[1] for t in in_shapes)) + s[2:]
    return s


class GraphBuilder:
    """Appends layers in topological order, tracking channel counts."""

    def __init__(self, in_channels: int):
        self.layers: list[LayerSpec] = []
        self.channels: dict[str, int] = {INPUT: in_channels}

    def add(self, name, kind, inputs, **kw) -> str:
        layer = LayerSpec(name, kind, tuple(inputs), **kw)
        self.layers.append(layer)
        if kind in ("conv", "dense"):
            self.channels[name] = layer.out_channels
        elif kind == "concat":
            self.channels[name] = sum(self.channels[i] for i in inputs)
        else:
            self.channels[name] = self.channels[inputs[0]]
        return name
