"""Static op and storage accounting for layer graphs.

A convolution is counted as a GEMM with n output channels, k = C·kh·kw
reduction length and m = N·OH·OW columns. Full-precision layers cost n·m·k
MACs and 32 bits per parameter; binary layers cost 2·n·m·k binary ops and
1 bit per weight. FLOP-equivalent counts 64 binary ops as one MAC.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .arch.spec import INPUT, ArchSpec, LayerSpec, layer_output_shape
from .errors import UnresolvedGeometry

FP_BITS = 32
BINARY_OPS_PER_MAC = 64
MB = 2 ** 20


@dataclass(frozen=True)
class MethodPreset:
    """One row of the published comparison of quantization schemes (reference only)."""
    name: str
    inputs: str
    weights: str
    macs: str
    binary_ops: str
    speedup: str
    operations: str

    def count(self, n: int, m: int, k: int) -> tuple[int, int]:
        env = {"n": n, "m": m, "k": k}
        return eval(self.macs, {}, env), eval(self.binary_ops, {}, env)  # formulas are fixed literals below


METHOD_PRESETS = {p.name: p for p in [
    MethodPreset("Full-precision", "R", "R", "n*m*k", "0", "1x", "mul,add"),
    MethodPreset("BC", "R", "{-1,1}", "n*m*k", "0", "~2x", "sign,add"),
    MethodPreset("BWN", "R", "{-a,a}", "n*m*k", "0", "~2x", "sign,add"),
    MethodPreset("TTQ", "R", "{-a^n,0,a^p}", "n*m*k", "0", "~2x", "sign,add"),
    MethodPreset("DoReFa", "{0,1}x4", "{0,a}", "n*k", "8*n*m*k", "~15x", "and,bitcount"),
    MethodPreset("HORQ", "{-b,b}x2", "{-a,a}", "4*n*m", "4*n*m*k", "~29x", "xor,bitcount"),
    MethodPreset("TBN", "{-1,0,1}", "{-a,a}", "n*m", "3*n*m*k", "~40x", "and,xor,bitcount"),
    MethodPreset("XNOR", "{-b,b}", "{-a,a}", "2*n*m", "2*n*m*k", "~58x", "xor,bitcount"),
    MethodPreset("BNN", "{-1,1}", "{-1,1}", "0", "2*n*m*k", "~64x", "xor,bitcount"),
    MethodPreset("Bi-Real", "{-1,1}", "{-1,1}", "0", "2*n*m*k", "~64x", "xor,bitcount"),
    MethodPreset("BinaryDenseNet", "{-1,1}", "{-1,1}", "0", "2*n*m*k", "~64x", "xor,bitcount"),
]}


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    precision: str
    macs: int = 0
    binary_ops: int = 0
    param_bits: int = 0


@dataclass
class CostReport:
    model: str
    batch: int
    layers: list[LayerCost] = field(default_factory=list)

    @property
    def macs(self) -> int:
        return sum(l.macs for l in self.layers)

    @property
    def binary_ops(self) -> int:
        return sum(l.binary_ops for l in self.layers)

    @property
    def param_bits(self) -> int:
        return sum(l.param_bits for l in self.layers)

    @property
    def model_size_bytes(self) -> float:
        return model_size(self)

    @property
    def flop_equivalent(self) -> float:
        return flop_equivalent(self)

    def without(self, name: str) -> "CostReport":
        return CostReport(self.model, self.batch, [l for l in self.layers if l.name != name])

    def to_csv(self) -> str:
        rows = ["layer,kind,precision,macs,binary_ops,param_bits"]
        rows += [f"{l.name},{l.kind},{l.precision},{l.macs},{l.binary_ops},{l.param_bits}" for l in self.layers]
        rows.append(f"total,,,{self.macs},{self.binary_ops},{self.param_bits}")
        rows.append(f"flop_equivalent,,,{self.flop_equivalent:.1f},,")
        return "\n".join(rows) + "\n"


def count_layer(layer: LayerSpec, input_shape: tuple[int, ...] | None) -> LayerCost:
    if input_shape is None:
        raise UnresolvedGeometry(f"no input geometry for {layer.name!r}")
    out = layer_output_shape(layer, [input_shape])
    binary = layer.is_binary
    prec = "binary" if binary and layer.kind in ("conv", "dense") else "fp"
    if layer.kind in ("conv", "dense"):
        if layer.kind == "conv":
            n_, c = out[0], input_shape[1]
            n, k, m = layer.out_channels, c * layer.kernel * layer.kernel, n_ * out[2] * out[3]
        else:
            n, k, m = layer.out_channels, input_shape[1], input_shape[0]
        weights = n * k
        bias_bits = FP_BITS * n if layer.bias else 0
        if binary:
            return LayerCost(layer.name, layer.kind, prec, 0, 2 * n * m * k, weights + bias_bits)
        return LayerCost(layer.name, layer.kind, prec, n * m * k, 0, FP_BITS * weights + bias_bits)
    if layer.kind == "bn":
        c = input_shape[1]
        elems = 1
        for s in input_shape:
            elems *= s
        return LayerCost(layer.name, layer.kind, prec, 2 * elems, 0, 2 * FP_BITS * c)
    return LayerCost(layer.name, layer.kind, prec)


def analyze(spec: ArchSpec, batch: int = 1) -> CostReport:
    shapes = spec.infer_shapes(batch)
    report = CostReport(spec.name, batch)
    for layer in spec.layers:
        # merges have several inputs; they carry no cost so the first suffices
        report.layers.append(count_layer(layer, shapes[layer.inputs[0]] if layer.inputs[0] in shapes
                                         else shapes.get(INPUT)))
    return report


def model_size(report: CostReport) -> float:
    """Stored bytes: 1 bit per binary weight, 32 per fp parameter, BN running stats excluded."""
    return report.param_bits / 8


def model_size_mb(report: CostReport) -> float:
    return model_size(report) / MB


def flop_equivalent(report: CostReport) -> float:
    return report.macs + report.binary_ops / BINARY_OPS_PER_MAC


def accuracy_cost_csv(entries: list[tuple[str, CostReport, float]]) -> str:
    """``model,flop_equivalent,accuracy`` rows joining reports with user-supplied accuracies."""
    rows = ["model,flop_equivalent,accuracy"]
    rows += [f"{name},{rep.flop_equivalent:.1f},{acc}" for name, rep, acc in entries]
    return "\n".join(rows) + "\n"
