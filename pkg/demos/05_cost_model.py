"""
Counting operations and bytes
=============================

Full-precision layers cost n*m*k MACs and 32 bits per weight; binary layers
cost 2*n*m*k one-bit operations and 1 bit per weight. The FLOP-equivalent
counts 64 binary ops as one MAC.
"""
from binnet.arch import DenseNetConfig, ResNetEConfig, build_binary_densenet, build_resnet_e, split_blocks
from binnet.cost import METHOD_PRESETS, analyze, accuracy_cost_csv, model_size_mb

for name, p in METHOD_PRESETS.items():
    print(f"{name:15s} MACs {p.macs:8s} binary ops {p.binary_ops:10s} {p.speedup}")

print()
reports = {}
for label, cfg in [("resnete18 fp-down", ResNetEConfig()), ("resnete18 bin-down", ResNetEConfig(downsampling="binary")),
                   ("cifar fp-down", ResNetEConfig(num_classes=10, stem="small", input_size=32)),
                   ("cifar bin-down", ResNetEConfig(downsampling="binary", num_classes=10, stem="small", input_size=32))]:
    rep = reports[label] = analyze(build_resnet_e(cfg))
    print(f"{label:20s} {model_size_mb(rep):6.3f} MiB  {rep.flop_equivalent / 1e6:8.1f} M FLOP-eq")

print("\nsplitting DenseNet blocks barely moves the size:")
cfg = DenseNetConfig(total_blocks=8, growth_rate=256)
for _ in range(3):
    rep = analyze(build_binary_densenet(cfg))
    print(f"  {cfg.total_blocks:2d} x {cfg.growth_rate:3d}: {model_size_mb(rep):.3f} MiB")
    cfg = split_blocks(cfg)

print("\n" + accuracy_cost_csv([("resnete18-fp-down", reports["resnete18 fp-down"], "n/a"),
                       ("resnete18-bin-down", reports["resnete18 bin-down"], "n/a")]))
