import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binnet.arch import (ArchSpec, DenseNetConfig, LayerSpec, ResNetEConfig, build_binary_densenet, build_resnet_e,
                         densenet_channel_plan, desk_densenet_config, dumps_config, loads_config, merge_blocks,
                         split_blocks, validate_arch)
from binnet.arch.config_io import dump_arch, load_arch
from binnet.arch.spec import INPUT, GraphBuilder
from binnet.errors import InvalidConfig, OddGrowth


def test_resnete_default_counts():
    spec = build_resnet_e()
    assert len(spec.of_kind("conv", "binary")) == 16
    assert all(l.kernel == 3 for l in spec.of_kind("conv", "binary"))
    assert len(spec.of_kind("add")) == 16
    assert spec.name == "resnete18"


def test_resnete_small():
    spec = build_resnet_e(ResNetEConfig(blocks_per_stage=(1, 1, 1, 1)))
    assert len(spec.of_kind("conv", "binary")) == 4 and len(spec.of_kind("add")) == 4


def test_resnete_blocks_and_downsampling():
    spec = build_resnet_e(ResNetEConfig(downsampling="binary"))
    for conv in spec.of_kind("conv", "binary"):
        sign = spec[conv.inputs[0]]
        assert sign.kind == "sign" and spec[sign.inputs[0]].kind == "bn"
    down = [l for l in spec.layers if l.downsampling]
    assert len(down) == 3 and all(l.is_binary and l.kernel == 1 for l in down)
    for d in down:
        pool = spec[spec[spec[d.inputs[0]].inputs[0]].inputs[0]]
        assert pool.kind == "avgpool" and pool.kernel == 2
    fp = build_resnet_e()
    assert all(not l.is_binary for l in fp.layers if l.downsampling)
    shapes = fp.infer_shapes()
    assert shapes[fp.output] == (1, 1000)
    assert shapes["s4.b4.add"] == (1, 512, 7, 7)


def test_resnete_shortcut_count_matches_blocks():
    for blocks in [(1, 2, 3, 1), (2, 2, 2, 2), (3, 1)]:
        cfg = ResNetEConfig(stage_channels=(16, 32, 64, 128)[:len(blocks)], blocks_per_stage=blocks,
                            stem="small", input_size=32)
        assert len(build_resnet_e(cfg).of_kind("add")) == sum(blocks)


def test_invalid_resnete():
    with pytest.raises(InvalidConfig):
        build_resnet_e(ResNetEConfig(downsampling="ternary"))
    with pytest.raises(InvalidConfig):
        build_resnet_e(ResNetEConfig(blocks_per_stage=(1, 1)))


def test_densenet_one_block_concat():
    cfg = DenseNetConfig(total_blocks=1, growth_rate=12, num_stages=1, stem_channels=20, stem="small",
                         input_size=8, num_classes=3)
    shapes = build_binary_densenet(cfg).infer_shapes()
    assert shapes["s1.b1.cat"][1] == 32


def test_densenet_transitions():
    low = build_binary_densenet(DenseNetConfig())
    kinds = [low[f"t2.{s}"].kind for s in ("bn", "sign", "conv", "pool")]
    assert kinds == ["bn", "sign", "conv", "avgpool"] and low["t2.conv"].is_binary
    high = build_binary_densenet(DenseNetConfig(reduction_mode="fp-high"))
    assert [high[f"t1.{s}"].kind for s in ("pool", "relu", "conv")] == ["maxpool", "relu", "conv"]
    assert not high["t1.conv"].is_binary
    shapes = high.infer_shapes()
    assert shapes["t1.conv"][1] == shapes["s1.b4.cat"][1] // 2


def test_binary_low_divisors():
    spec = build_binary_densenet(DenseNetConfig())
    s = spec.infer_shapes()
    assert s["t1.conv"][1] == s["s1.b4.cat"][1]
    assert s["t2.conv"][1] == int(s["s2.b4.cat"][1] // 1.4)
    assert s["t3.conv"][1] == int(s["s3.b4.cat"][1] // 1.4)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.sampled_from([2, 4, 8, 16, 12]), st.integers(4, 64),
       st.sampled_from(["fp-high", "binary-low"]))
def test_channel_plan_matches_graph(stages, per_stage, growth, stem, mode):
    cfg = DenseNetConfig(total_blocks=stages * per_stage, growth_rate=growth, num_stages=stages,
                         stem_channels=stem, reduction_mode=mode, stem="small", input_size=2 ** stages,
                         num_classes=5)
    spec = build_binary_densenet(cfg)
    shapes = spec.infer_shapes()
    chans = [shapes[l.name][1] for l in spec.layers
             if l.name == "stem.relu" or l.kind == "concat" or (l.downsampling and l.kind == "conv")]
    assert chans == densenet_channel_plan(cfg)


def test_split_blocks():
    a = DenseNetConfig(total_blocks=8, growth_rate=256)
    b = split_blocks(a)
    assert (b.total_blocks, b.growth_rate) == (16, 128)
    c = split_blocks(b)
    assert (c.total_blocks, c.growth_rate) == (32, 64)
    assert merge_blocks(split_blocks(b)) == b
    explicit = DenseNetConfig(total_blocks=6, growth_rate=10, stage_split=(1, 2, 3), num_stages=3)
    assert split_blocks(explicit).stage_split == (2, 4, 6)
    with pytest.raises(OddGrowth):
        split_blocks(DenseNetConfig(growth_rate=7))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=4), st.integers(1, 32))
def test_split_preserves_growth_per_stage(split, half):
    cfg = DenseNetConfig(total_blocks=sum(split), growth_rate=2 * half, stage_split=tuple(split),
                         num_stages=len(split))
    s = split_blocks(cfg)
    assert [b * s.growth_rate for b in s.stage_split] == [b * cfg.growth_rate for b in split]


def test_validate_clean_builds():
    assert validate_arch(build_resnet_e()) == []
    assert validate_arch(build_binary_densenet(DenseNetConfig(reduction_mode="fp-high"))) == []
    advisory = validate_arch(build_binary_densenet(DenseNetConfig()))
    assert advisory and all(v.advisory and v.rule == "binary-downsampling" for v in advisory)


def _hand_built(bottleneck=False, binary_fc=False, shortcut=True):
    g = GraphBuilder(3)
    x = g.add("stem", "conv", [INPUT], out_channels=16, kernel=3, padding=1)
    h = x
    if bottleneck:
        h = g.add("b.bn1", "bn", [h], block="b")
        h = g.add("b.sign1", "sign", [h], block="b")
        h = g.add("b.reduce", "conv", [h], out_channels=4, precision="binary", block="b")
    h = g.add("b.bn2", "bn", [h], block="b")
    h = g.add("b.sign2", "sign", [h], block="b")
    h = g.add("b.conv", "conv", [h], out_channels=4 if bottleneck else 16, kernel=3, padding=1,
              precision="binary", block="b")
    if bottleneck:
        h = g.add("b.bn3", "bn", [h], block="b")
        h = g.add("b.sign3", "sign", [h], block="b")
        h = g.add("b.expand", "conv", [h], out_channels=16, precision="binary", block="b")
    if shortcut:
        h = g.add("b.add", "add", [h, x], block="b")
    h = g.add("gap", "gap", [h])
    g.add("fc", "dense", [h], out_channels=10, precision="binary" if binary_fc else "fp")
    return ArchSpec("hand", (3, 8, 8), tuple(g.layers))


def test_validate_rules():
    assert validate_arch(_hand_built()) == []
    assert "bottleneck" in {v.rule for v in validate_arch(_hand_built(bottleneck=True))}
    assert "first-last-fp" in {v.rule for v in validate_arch(_hand_built(binary_fc=True))}
    assert "missing-shortcut" in {v.rule for v in validate_arch(_hand_built(shortcut=False))}
    spec = _hand_built()
    bare = [l if l.name != "b.conv" else LayerSpec("b.conv", "conv", ("stem",), 16, 3, padding=1,
                                                     precision="binary", block="b")
            for l in spec.layers]
    assert "bn-sign-before-binary" in {v.rule for v in validate_arch(ArchSpec("bare", (3, 8, 8), tuple(bare)))}


def test_spec_rejects_bad_graphs():
    with pytest.raises(InvalidConfig):
        ArchSpec("x", (1, 4, 4), (LayerSpec("a", "relu", ("b",)), LayerSpec("b", "relu", ("a",))))
    with pytest.raises(InvalidConfig):
        ArchSpec("x", (1, 4, 4), (LayerSpec("a", "relu", (INPUT,)), LayerSpec("a", "relu", (INPUT,))))
    with pytest.raises(InvalidConfig):
        ArchSpec("x", (1, 4, 4), (LayerSpec("a", "warp", (INPUT,)),))


def test_arch_hash_stable_and_sensitive():
    a, b = build_resnet_e(), build_resnet_e()
    assert a.arch_hash() == b.arch_hash()
    assert a.arch_hash() != build_resnet_e(ResNetEConfig(downsampling="binary")).arch_hash()


@pytest.mark.parametrize("cfg", [ResNetEConfig(), ResNetEConfig(downsampling="binary", stem="small", input_size=32),
                                 DenseNetConfig(), DenseNetConfig(reduction_mode="fp-high"),
                                 desk_densenet_config(), DenseNetConfig(total_blocks=6, stage_split=(1, 2, 3),
                                                                        num_stages=3)])
def test_config_roundtrip(cfg, tmp_path):
    assert loads_config(dumps_config(cfg)) == cfg
    builder = build_resnet_e if isinstance(cfg, ResNetEConfig) else build_binary_densenet
    dump_arch(builder(cfg), tmp_path / "a.cfg")
    assert load_arch(tmp_path / "a.cfg") == builder(cfg)


@pytest.mark.parametrize("text", [
    "[head]\nclasses=10\n",
    "[stem]\nkind=small\n[stage 1]\nkind=dense\nblocks=2\ngrowth=8\n[stage 3]\nkind=dense\nblocks=1\ngrowth=8\n[head]\n",
    "[stem]\n[stage 1]\nkind=dense\nblocks=2\ngrowth=8\n[stage 2]\nkind=dense\nblocks=2\ngrowth=8\n"
    "[transition 1]\nprecision=binary\nreduction=3\n[head]\n",
    "[stem]\n[stage 1]\nkind=resnete\nchannels=x\nblocks=1\n[head]\n",
    "[stem]\n[stage 1]\nkind=conv\n[head]\n",
])
def test_bad_configs(text):
    with pytest.raises(InvalidConfig):
        loads_config(text)
