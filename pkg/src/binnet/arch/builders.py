"""Builders for binary ResNetE and BinaryDenseNet layer graphs."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

from ..errors import InvalidConfig, OddGrowth
from .spec import INPUT, ArchSpec, GraphBuilder

DOWNSAMPLING_MODES = ("fp", "binary")
REDUCTION_MODES = ("fp-high", "binary-low")
STEMS = ("imagenet", "small")

# channel divisors of the binary-low transitions: none in the first, 1.4 afterwards
BINARY_LOW_DIVISORS = (Fraction(1), Fraction(7, 5), Fraction(7, 5))


@dataclass(frozen=True)
class ResNetEConfig:
    stage_channels: tuple[int, ...] = (64, 128, 256, 512)
    blocks_per_stage: tuple[int, ...] = (4, 4, 4, 4)  # single-conv blocks, two per ResNet18 basic block
    downsampling: str = "fp"
    num_classes: int = 1000
    stem: str = "imagenet"
    in_channels: int = 3
    input_size: int = 224

    def validate(self):
        if len(self.stage_channels) != len(self.blocks_per_stage) or not self.stage_channels:
            raise InvalidConfig("stage_channels and blocks_per_stage must have equal, nonzero length")
        if any(b < 1 for b in self.blocks_per_stage) or any(c < 1 for c in self.stage_channels):
            raise InvalidConfig("every stage needs at least one block and one channel")
        if self.downsampling not in DOWNSAMPLING_MODES:
            raise InvalidConfig(f"downsampling must be one of {DOWNSAMPLING_MODES}")
        if self.stem not in STEMS:
            raise InvalidConfig(f"stem must be one of {STEMS}")
        if self.num_classes < 1:
            raise InvalidConfig("num_classes must be positive")


@dataclass(frozen=True)
class DenseNetConfig:
    total_blocks: int = 16
    growth_rate: int = 128
    stage_split: tuple[int, ...] | None = None
    reduction_mode: str = "binary-low"
    stem_channels: int = 64
    num_classes: int = 1000
    num_stages: int = 4
    stem: str = "imagenet"
    in_channels: int = 3
    input_size: int = 224

    @property
    def split(self) -> tuple[int, ...]:
        """Blocks per stage; uniform over ``num_stages`` unless given."""
        if self.stage_split is not None:
            return tuple(self.stage_split)
        if self.total_blocks % self.num_stages:
            raise InvalidConfig(f"{self.total_blocks} blocks do not split evenly over {self.num_stages} stages")
        return (self.total_blocks // self.num_stages,) * self.num_stages

    def divisors(self) -> tuple[Fraction, ...]:
        n = len(self.split) - 1
        if self.reduction_mode == "fp-high":
            return (Fraction(2),) * n
        return (BINARY_LOW_DIVISORS[:1] + (Fraction(7, 5),) * max(n - 1, 0))[:n]

    def validate(self):
        split = self.split
        if sum(split) != self.total_blocks or any(b < 0 for b in split) or not split:
            raise InvalidConfig(f"stage_split {split} does not sum to {self.total_blocks}")
        if self.growth_rate < 1 or self.stem_channels < 1 or self.num_classes < 1:
            raise InvalidConfig("growth_rate, stem_channels and num_classes must be positive")
        if self.reduction_mode not in REDUCTION_MODES:
            raise InvalidConfig(f"reduction_mode must be one of {REDUCTION_MODES}")
        if self.stem not in STEMS:
            raise InvalidConfig(f"stem must be one of {STEMS}")


def reduce_channels(c: int, divisor: Fraction) -> int:
    return math.floor(Fraction(c) / divisor)


def _stem(g: GraphBuilder, kind: str, channels: int) -> str:
    if kind == "imagenet":
        x = g.add("stem.conv", "conv", [INPUT], out_channels=channels, kernel=7, stride=2, padding=3, block="stem")
        x = g.add("stem.bn", "bn", [x], block="stem")
        x = g.add("stem.relu", "relu", [x], block="stem")
        return g.add("stem.pool", "maxpool", [x], kernel=3, stride=2, padding=1, block="stem")
    x = g.add("stem.conv", "conv", [INPUT], out_channels=channels, kernel=3, stride=1, padding=1, block="stem")
    x = g.add("stem.bn", "bn", [x], block="stem")
    return g.add("stem.relu", "relu", [x], block="stem")


def _head(g: GraphBuilder, x: str, num_classes: int) -> None:
    x = g.add("head.bn", "bn", [x], block="head")
    x = g.add("head.relu", "relu", [x], block="head")
    x = g.add("head.pool", "gap", [x], block="head")
    g.add("head.fc", "dense", [x], out_channels=num_classes, bias=True, block="head")


def build_resnet_e(cfg: ResNetEConfig = ResNetEConfig()) -> ArchSpec:
    """Binary ResNetE: one BN→sign→3×3 binary conv per block, each with its own shortcut.

    The first block of every later stage convolves with stride 2; its
    shortcut is a 2×2 average pool followed by a 1×1 downsampling conv in
    ``cfg.downsampling`` precision. A full-precision downsampling conv reads
    the real-valued block input.
    """
    cfg.validate()
    g = GraphBuilder(cfg.in_channels)
    x = _stem(g, cfg.stem, cfg.stage_channels[0])
    for s, (ch, nblocks) in enumerate(zip(cfg.stage_channels, cfg.blocks_per_stage), start=1):
        for b in range(1, nblocks + 1):
            tag = f"s{s}.b{b}"
            cin = g.channels[x]
            stride = 2 if (s > 1 and b == 1) else 1
            shortcut = x
            if stride != 1 or cin != ch:
                d = f"{tag}.down"
                y = g.add(f"{d}.pool", "avgpool", [x], kernel=stride, stride=stride, block=tag) if stride != 1 else x
                if cfg.downsampling == "fp":
                    y = g.add(f"{d}.conv", "conv", [y], out_channels=ch, precision="fp", block=tag, downsampling=True)
                    y = g.add(f"{d}.bn", "bn", [y], block=tag)
                else:
                    y = g.add(f"{d}.bn", "bn", [y], block=tag)
                    y = g.add(f"{d}.sign", "sign", [y], block=tag)
                    y = g.add(f"{d}.conv", "conv", [y], out_channels=ch, precision="binary", block=tag,
                              downsampling=True)
                shortcut = y
            h = g.add(f"{tag}.bn", "bn", [x], block=tag)
            h = g.add(f"{tag}.sign", "sign", [h], block=tag)
            h = g.add(f"{tag}.conv", "conv", [h], out_channels=ch, kernel=3, stride=stride, padding=1,
                      precision="binary", block=tag)
            x = g.add(f"{tag}.add", "add", [h, shortcut], block=tag)
    _head(g, x, cfg.num_classes)
    name = f"resnete{sum(cfg.blocks_per_stage) + 2}"
    return ArchSpec(name, (cfg.in_channels, cfg.input_size, cfg.input_size), tuple(g.layers),
                    meta={"family": "resnete", "config": cfg})


def build_binary_densenet(cfg: DenseNetConfig = DenseNetConfig()) -> ArchSpec:
    """BinaryDenseNet: each block concatenates growth_rate new channels.

    Transitions between stages depend on ``reduction_mode``:

    * ``fp-high``: MaxPool → ReLU → full-precision 1×1 conv halving channels.
    * ``binary-low``: BN → sign → binary 1×1 conv → AvgPool, with channel
      divisors 1, 1.4, 1.4, ... (floor).
    """
    cfg.validate()
    split = cfg.split
    divisors = cfg.divisors()
    g = GraphBuilder(cfg.in_channels)
    x = _stem(g, cfg.stem, cfg.stem_channels)
    for s, nblocks in enumerate(split, start=1):
        for b in range(1, nblocks + 1):
            tag = f"s{s}.b{b}"
            h = g.add(f"{tag}.bn", "bn", [x], block=tag)
            h = g.add(f"{tag}.sign", "sign", [h], block=tag)
            h = g.add(f"{tag}.conv", "conv", [h], out_channels=cfg.growth_rate, kernel=3, padding=1,
                      precision="binary", block=tag)
            x = g.add(f"{tag}.cat", "concat", [x, h], block=tag)
        if s < len(split):
            tag = f"t{s}"
            out = reduce_channels(g.channels[x], divisors[s - 1])
            if out < 1:
                raise InvalidConfig(f"transition {s} reduces to zero channels")
            if cfg.reduction_mode == "fp-high":
                x = g.add(f"{tag}.pool", "maxpool", [x], kernel=2, stride=2, block=tag)
                x = g.add(f"{tag}.relu", "relu", [x], block=tag)
                x = g.add(f"{tag}.conv", "conv", [x], out_channels=out, precision="fp", block=tag,
                          downsampling=True)
            else:
                x = g.add(f"{tag}.bn", "bn", [x], block=tag)
                x = g.add(f"{tag}.sign", "sign", [x], block=tag)
                x = g.add(f"{tag}.conv", "conv", [x], out_channels=out, precision="binary", block=tag,
                          downsampling=True)
                x = g.add(f"{tag}.pool", "avgpool", [x], kernel=2, stride=2, block=tag)
    _head(g, x, cfg.num_classes)
    return ArchSpec(f"binarydensenet-{cfg.total_blocks}x{cfg.growth_rate}-{cfg.reduction_mode}",
                    (cfg.in_channels, cfg.input_size, cfg.input_size), tuple(g.layers),
                    meta={"family": "densenet", "config": cfg})


def split_blocks(cfg: DenseNetConfig) -> DenseNetConfig:
    """Halve the growth rate and double the block count of every stage."""
    if cfg.growth_rate % 2:
        raise OddGrowth(f"growth rate {cfg.growth_rate} cannot be halved")
    split = tuple(2 * b for b in cfg.stage_split) if cfg.stage_split is not None else None
    return replace(cfg, total_blocks=2 * cfg.total_blocks, growth_rate=cfg.growth_rate // 2, stage_split=split)


def merge_blocks(cfg: DenseNetConfig) -> DenseNetConfig:
    """Inverse of :func:`split_blocks`."""
    split = cfg.stage_split
    if cfg.total_blocks % 2 or (split is not None and any(b % 2 for b in split)):
        raise InvalidConfig("merging needs an even number of blocks in every stage")
    return replace(cfg, total_blocks=cfg.total_blocks // 2, growth_rate=2 * cfg.growth_rate,
                   stage_split=tuple(b // 2 for b in split) if split is not None else None)


def densenet_channel_plan(cfg: DenseNetConfig) -> list[int]:
    """Channel count after the stem, every block and every transition, computed in closed form."""
    plan = [cfg.stem_channels]
    c = cfg.stem_channels
    for s, nblocks in enumerate(cfg.split):
        plan.extend(c + cfg.growth_rate * (b + 1) for b in range(nblocks))
        c += cfg.growth_rate * nblocks
        if s < len(cfg.split) - 1:
            c = reduce_channels(c, cfg.divisors()[s])
            plan.append(c)
    return plan


RESNETE18_IMAGENET = ResNetEConfig()
RESNETE18_CIFAR = ResNetEConfig(num_classes=10, stem="small", input_size=32)


def desk_densenet_config(**overrides) -> DenseNetConfig:
    """Three-stage BinaryDenseNet for 28×28 single-channel inputs."""
    base = dict(total_blocks=6, growth_rate=16, num_stages=3, reduction_mode="binary-low",
                stem_channels=32, num_classes=10, stem="small", in_channels=1, input_size=28)
    base.update(overrides)
    return DenseNetConfig(**base)
