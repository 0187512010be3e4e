"""Text config files describing ResNetE / BinaryDenseNet models.

Grammar (INI-style, one ``key = value`` per line)::

    [stem]
    kind = imagenet | small        ; 7x7/2 conv + 3x3/2 max-pool, or 3x3/1 conv
    channels = 64
    in_channels = 3
    input_size = 224

    [stage N]                      ; N = 1, 2, ...
    kind = resnete | dense
    channels = 64                  ; resnete only
    blocks = 2
    growth = 128                   ; dense only, same in every stage

    [transition N]                 ; between stage N and N+1
    precision = full | binary
    reduction = 1.4                ; dense only, channel divisor

    [head]
    kind = dense
    classes = 1000

ResNetE transitions must share one precision. Dense transitions must form
either the fp-high pattern (full, 2 everywhere) or the binary-low pattern
(binary, 1 then 1.4).
"""
from __future__ import annotations

import configparser
import re
from fractions import Fraction
from pathlib import Path

from ..errors import InvalidConfig
from .builders import DenseNetConfig, ResNetEConfig, build_binary_densenet, build_resnet_e
from .spec import ArchSpec

_PRECISION = {"full": "fp", "fp": "fp", "full-precision": "fp", "binary": "binary"}


def _fmt_fraction(f: Fraction) -> str:
    return str(int(f)) if f.denominator == 1 else str(float(f))


def dumps_config(cfg: ResNetEConfig | DenseNetConfig) -> str:
    lines = []
    if isinstance(cfg, ResNetEConfig):
        lines += ["[stem]", f"kind = {cfg.stem}", f"channels = {cfg.stage_channels[0]}",
                  f"in_channels = {cfg.in_channels}", f"input_size = {cfg.input_size}", ""]
        n = len(cfg.stage_channels)
        for i, (ch, b) in enumerate(zip(cfg.stage_channels, cfg.blocks_per_stage), start=1):
            lines += [f"[stage {i}]", "kind = resnete", f"channels = {ch}", f"blocks = {b}", ""]
            if i < n:
                prec = "full" if cfg.downsampling == "fp" else "binary"
                lines += [f"[transition {i}]", f"precision = {prec}", ""]
    elif isinstance(cfg, DenseNetConfig):
        lines += ["[stem]", f"kind = {cfg.stem}", f"channels = {cfg.stem_channels}",
                  f"in_channels = {cfg.in_channels}", f"input_size = {cfg.input_size}", ""]
        split, divisors = cfg.split, cfg.divisors()
        prec = "full" if cfg.reduction_mode == "fp-high" else "binary"
        for i, b in enumerate(split, start=1):
            lines += [f"[stage {i}]", "kind = dense", f"blocks = {b}", f"growth = {cfg.growth_rate}", ""]
            if i < len(split):
                lines += [f"[transition {i}]", f"precision = {prec}",
                          f"reduction = {_fmt_fraction(divisors[i - 1])}", ""]
    else:
        raise TypeError(f"cannot serialise {type(cfg).__name__}")
    lines += ["[head]", "kind = dense", f"classes = {cfg.num_classes}", ""]
    return "\n".join(lines)


def _numbered(parser, prefix):
    found = {}
    for sec in parser.sections():
        m = re.fullmatch(rf"{prefix}\s+(\d+)", sec.strip())
        if m:
            found[int(m.group(1))] = parser[sec]
    idx = sorted(found)
    if idx != list(range(1, len(idx) + 1)):
        raise InvalidConfig(f"[{prefix} N] sections must be numbered 1..n, got {idx}")
    return [found[i] for i in idx]


def _int(sec, key, default=None):
    try:
        return int(sec[key]) if key in sec else default
    except ValueError as exc:
        raise InvalidConfig(f"{key} must be an integer, got {sec[key]!r}") from exc


def loads_config(text: str) -> ResNetEConfig | DenseNetConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfig(str(exc)) from exc
    if "stem" not in parser or "head" not in parser:
        raise InvalidConfig("config needs [stem] and [head] sections")
    stem, head = parser["stem"], parser["head"]
    stages = _numbered(parser, "stage")
    transitions = _numbered(parser, "transition")
    if not stages:
        raise InvalidConfig("config needs at least one [stage N] section")
    if len(transitions) != len(stages) - 1:
        raise InvalidConfig(f"{len(stages)} stages need {len(stages) - 1} transitions, got {len(transitions)}")
    kinds = {s.get("kind", "").strip() for s in stages}
    if len(kinds) != 1:
        raise InvalidConfig(f"all stages must share one kind, got {sorted(kinds)}")
    kind = kinds.pop()
    precisions = []
    for t in transitions:
        p = t.get("precision", "").strip()
        if p not in _PRECISION:
            raise InvalidConfig(f"unknown transition precision {p!r}")
        precisions.append(_PRECISION[p])
    common = dict(num_classes=_int(head, "classes", 1000), stem=stem.get("kind", "imagenet").strip(),
                  in_channels=_int(stem, "in_channels", 3), input_size=_int(stem, "input_size", 224))
    if kind == "resnete":
        if len(set(precisions)) > 1:
            raise InvalidConfig("ResNetE transitions must share one precision")
        cfg = ResNetEConfig(stage_channels=tuple(_int(s, "channels") for s in stages),
                            blocks_per_stage=tuple(_int(s, "blocks") for s in stages),
                            downsampling=precisions[0] if precisions else "fp", **common)
        if None in cfg.stage_channels or None in cfg.blocks_per_stage:
            raise InvalidConfig("resnete stages need channels= and blocks=")
        cfg.validate()
        return cfg
    if kind == "dense":
        growths = {_int(s, "growth") for s in stages}
        if len(growths) != 1 or None in growths:
            raise InvalidConfig("dense stages need one common growth=")
        split = blocks = tuple(_int(s, "blocks") for s in stages)
        if None in split:
            raise InvalidConfig("dense stages need blocks=")
        try:
            reductions = [Fraction(t.get("reduction", "1").strip()) for t in transitions]
        except ValueError as exc:
            raise InvalidConfig(f"bad reduction value: {exc}") from exc
        mode = "fp-high" if precisions and precisions[0] == "fp" else "binary-low"
        if len(set(split)) == 1:
            split = None  # uniform, the default layout
        cfg = DenseNetConfig(total_blocks=sum(blocks), growth_rate=growths.pop(), stage_split=split,
                             reduction_mode=mode, stem_channels=_int(stem, "channels", 64),
                             num_stages=len(blocks), **common)
        if precisions and (len(set(precisions)) > 1 or reductions != list(cfg.divisors())):
            raise InvalidConfig(f"transitions {list(zip(precisions, map(str, reductions)))} match "
                                "neither fp-high nor binary-low")
        cfg.validate()
        return cfg
    raise InvalidConfig(f"unknown stage kind {kind!r}")


def build_from_config(cfg: ResNetEConfig | DenseNetConfig) -> ArchSpec:
    if isinstance(cfg, ResNetEConfig):
        return build_resnet_e(cfg)
    return build_binary_densenet(cfg)


def load_arch(path: str | Path) -> ArchSpec:
    return build_from_config(loads_config(Path(path).read_text()))


def dump_arch(spec: ArchSpec, path: str | Path) -> None:
    cfg = spec.meta.get("config")
    if cfg is None:
        raise InvalidConfig(f"{spec.name} was not built from a config and has no text form")
    Path(path).write_text(dumps_config(cfg))
