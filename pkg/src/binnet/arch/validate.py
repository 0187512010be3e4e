"""Checks a layer graph against the information-flow design rules for BNNs."""
from __future__ import annotations

from dataclasses import dataclass

from .spec import INPUT, MERGE_KINDS, ArchSpec

PASS_THROUGH = ("bn", "sign", "relu", "clip")


@dataclass(frozen=True)
class Violation:
    rule: str
    layer: str
    message: str
    advisory: bool = False


def _descendants(spec: ArchSpec, start: str) -> set[str]:
    cons = spec.consumers()
    seen, stack = set(), [start]
    while stack:
        for nxt in cons.get(stack.pop(), []):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def _has_bypass(spec: ArchSpec, layer: str) -> bool:
    """True if some merge downstream of ``layer`` also receives a path avoiding it."""
    below = _descendants(spec, layer)
    for name in below:
        merge = spec[name]
        if merge.kind in MERGE_KINDS and any(i != layer and i not in below for i in merge.inputs):
            return True
    return False


def _conv_feeding(spec: ArchSpec, name: str):
    """Convs reached from ``name`` through pass-through layers only, same block."""
    src = spec[name]
    cons = spec.consumers()
    out, stack = [], list(cons[name])
    while stack:
        l = spec[stack.pop()]
        if l.block != src.block:
            continue
        if l.kind == "conv":
            out.append(l)
        elif l.kind in PASS_THROUGH:
            stack.extend(cons[l.name])
    return out


def validate_arch(spec: ArchSpec) -> list[Violation]:
    found: list[Violation] = []
    shapes = spec.infer_shapes()
    convs = spec.of_kind("conv")
    dense = spec.of_kind("dense")

    if convs and convs[0].is_binary:
        found.append(Violation("first-last-fp", convs[0].name, "first convolution should be full-precision"))
    if dense and dense[-1].is_binary:
        found.append(Violation("first-last-fp", dense[-1].name, "final dense layer should be full-precision"))

    for conv in convs:
        cin = shapes[conv.inputs[0]][1]
        if conv.kernel == 1 and conv.out_channels < cin:
            for nxt in _conv_feeding(spec, conv.name):
                if nxt.kernel > 1:
                    found.append(Violation("bottleneck", conv.name,
                                           f"1x1 conv narrows {cin}->{conv.out_channels} channels "
                                           f"before {nxt.kernel}x{nxt.kernel} conv {nxt.name}"))
                    break

    for conv in convs:
        if not conv.is_binary:
            continue
        if conv.downsampling:
            found.append(Violation("binary-downsampling", conv.name,
                                   "downsampling conv is binary; consider full precision", advisory=True))
        elif not _has_bypass(spec, conv.name):
            found.append(Violation("missing-shortcut", conv.name, "binary conv has no shortcut around it"))

    for layer in spec.layers:
        if layer.kind == "conv" and layer.is_binary:
            src = spec[layer.inputs[0]] if layer.inputs[0] != INPUT else None
            if src is None or src.kind != "sign" or src.inputs[0] == INPUT or spec[src.inputs[0]].kind != "bn":
                found.append(Violation("bn-sign-before-binary", layer.name,
                                       "binary conv should be fed by BatchNorm -> sign"))
    return found
