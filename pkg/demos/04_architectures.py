"""
ResNetE and BinaryDenseNet graphs
=================================

Builders emit declarative layer graphs. Every binary conv is fed by
BatchNorm -> sign and bypassed by a shortcut; the first conv and the
classifier stay full-precision. validate_arch checks these rules.
"""
from binnet.arch import (DenseNetConfig, ResNetEConfig, build_binary_densenet, build_resnet_e, densenet_channel_plan,
                         dumps_config, split_blocks, validate_arch)

resnet = build_resnet_e(ResNetEConfig())
print(resnet.name, "binary convs:", len(resnet.of_kind("conv", "binary")), "shortcuts:", len(resnet.of_kind("add")))
for layer in resnet.layers[4:12]:
    print(f"  {layer.name:18s} {layer.kind:8s} {layer.precision:6s} <- {', '.join(layer.inputs)}")
print("violations:", validate_arch(resnet))

print("\nbinary downsampling draws an advisory:")
for v in validate_arch(build_resnet_e(ResNetEConfig(downsampling="binary"))):
    print("  ", v.rule, v.layer)

cfg = DenseNetConfig(total_blocks=16, growth_rate=128)
print("\nchannel plan (16 blocks, growth 128, binary-low):", densenet_channel_plan(cfg))
print("after split_blocks -> growth", split_blocks(cfg).growth_rate, "blocks", split_blocks(cfg).total_blocks)
dense = build_binary_densenet(DenseNetConfig(reduction_mode="fp-high"))
print(dense.name, "output:", dense.infer_shapes()[dense.output])

print("\nconfig file form:\n")
print(dumps_config(ResNetEConfig(blocks_per_stage=(2, 2, 2, 2), stem="small", input_size=32, num_classes=10)))
