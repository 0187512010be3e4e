import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binnet.arch import DenseNetConfig, ResNetEConfig, build_binary_densenet, build_resnet_e, split_blocks
from binnet.arch.spec import INPUT, ArchSpec, LayerSpec
from binnet.cost import (METHOD_PRESETS, CostReport, LayerCost, analyze, count_layer, accuracy_cost_csv, flop_equivalent,
                         model_size, model_size_mb)
from binnet.errors import UnresolvedGeometry


def conv(precision, c=64, oc=64, k=3, name="c"):
    return LayerSpec(name, "conv", (INPUT,), out_channels=oc, kernel=k, padding=k // 2, precision=precision)


def test_preset_example():
    # n=64 filters, k=576 = 64*3*3, m=1000 positions
    fp = count_layer(conv("fp"), (1, 64, 25, 40))
    assert (fp.macs, fp.binary_ops) == (36_864_000, 0)
    b = count_layer(conv("binary"), (1, 64, 25, 40))
    assert (b.macs, b.binary_ops) == (0, 73_728_000)
    assert b.param_bits == 36_864 and fp.param_bits == 32 * 36_864


def test_bn_and_passive_layers():
    bn = count_layer(LayerSpec("bn", "bn", (INPUT,)), (2, 8, 4, 4))
    assert bn.param_bits == 2 * 32 * 8 and bn.macs == 2 * 2 * 8 * 16 and bn.binary_ops == 0
    for kind in ("relu", "sign", "maxpool", "avgpool", "gap", "clip"):
        c = count_layer(LayerSpec("p", kind, (INPUT,), kernel=2, stride=2), (1, 8, 4, 4))
        assert (c.macs, c.binary_ops, c.param_bits) == (0, 0, 0)


def test_dense_counts_bias():
    d = count_layer(LayerSpec("fc", "dense", (INPUT,), out_channels=10, bias=True), (3, 20))
    assert d.macs == 10 * 3 * 20 and d.param_bits == 32 * (200 + 10)


def test_unresolved_geometry():
    with pytest.raises(UnresolvedGeometry):
        count_layer(conv("fp"), None)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 64), st.integers(1, 64), st.sampled_from([1, 3, 5]), st.integers(5, 20), st.integers(1, 4))
def test_binary_is_one_32nd_of_fp(c, oc, k, h, n):
    shape = (n, c, h, h)
    fp, b = count_layer(conv("fp", c, oc, k), shape), count_layer(conv("binary", c, oc, k), shape)
    rep = lambda l: CostReport("x", n, [l])
    assert fp.binary_ops == 0 and b.macs == 0
    assert b.binary_ops == 2 * fp.macs
    assert flop_equivalent(rep(b)) * 32 == flop_equivalent(rep(fp))
    assert flop_equivalent(rep(fp)) == fp.macs
    assert flop_equivalent(rep(b)) == b.binary_ops / 64


def test_totals_and_additivity():
    spec = build_resnet_e(ResNetEConfig(stem="small", input_size=32, num_classes=10))
    rep = analyze(spec)
    assert rep.macs == sum(l.macs for l in rep.layers)
    assert rep.param_bits == sum(l.param_bits for l in rep.layers)
    victim = rep.layers[5]
    less = rep.without(victim.name)
    assert rep.macs - less.macs == victim.macs
    assert rep.binary_ops - less.binary_ops == victim.binary_ops
    assert rep.param_bits - less.param_bits == victim.param_bits
    assert model_size(rep) == rep.param_bits / 8
    assert model_size_mb(rep) == rep.param_bits / 8 / 2 ** 20


def test_batch_folds_into_m():
    spec = build_resnet_e(ResNetEConfig(stem="small", input_size=32, num_classes=10))
    one, four = analyze(spec, 1), analyze(spec, 4)
    assert four.macs == 4 * one.macs and four.binary_ops == 4 * one.binary_ops
    assert four.param_bits == one.param_bits


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 9), st.integers(0, 10 ** 9), st.integers(1, 10 ** 6), st.integers(1, 10 ** 6))
def test_flop_equivalent_monotone(macs, ops, dm, do):
    f = lambda m, o: flop_equivalent(CostReport("x", 1, [LayerCost("l", "conv", "fp", m, o)]))
    assert f(macs + dm, ops) > f(macs, ops) and f(macs, ops + do) > f(macs, ops)


def test_report_csv():
    rep = analyze(build_binary_densenet(DenseNetConfig(total_blocks=3, num_stages=3, stem="small",
                                                        input_size=16, growth_rate=8)))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "layer,kind,precision,macs,binary_ops,param_bits"
    assert lines[-2].startswith("total,") and lines[-1].startswith("flop_equivalent,")
    assert len(lines) == len(rep.layers) + 3
    fig = accuracy_cost_csv([("a", rep, 0.5)]).splitlines()
    assert fig[0] == "model,flop_equivalent,accuracy" and fig[1].endswith(",0.5")


def test_method_presets():
    assert METHOD_PRESETS["BNN"].count(2, 3, 4) == (0, 48)
    assert METHOD_PRESETS["Full-precision"].count(2, 3, 4) == (24, 0)
    assert METHOD_PRESETS["XNOR"].speedup == "~58x"


def test_split_trend_monotone():
    cfg = DenseNetConfig(total_blocks=8, growth_rate=256)
    sizes = []
    for _ in range(3):
        sizes.append(model_size(analyze(build_binary_densenet(cfg))))
        cfg = split_blocks(cfg)
    assert sizes[0] < sizes[1] < sizes[2]
    assert all(b / a - 1 < 0.05 for a, b in zip(sizes, sizes[1:]))
