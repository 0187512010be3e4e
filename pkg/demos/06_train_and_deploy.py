"""
Train a small BinaryDenseNet, save it, export packed weights
============================================================

Trains on the synthetic 10-class 28x28 set, writes a checkpoint with latent
weights plus optimizer state, then an inference-only export whose binary
weights are just bits, and evaluates it through the xnor kernels.
"""
import tempfile
from pathlib import Path

from binnet.arch import desk_densenet_config
from binnet.train import checkpoint as ck
from binnet.train.data import synthetic_dataset
from binnet.train.loop import TrainConfig, evaluate, train

EPOCHS = 3  # ten reach roughly 99% test accuracy

train_ds, test_ds = synthetic_dataset(5000, 1000, seed=0)
cfg = TrainConfig(desk_densenet_config(), optimizer="adam-no-decay", lr=3e-3, epochs=EPOCHS, batch_size=64)
result = train(cfg, train_ds, test_ds, epoch_callback=lambda e, r: print(r.log.rows[-1].csv()))

out = Path(tempfile.mkdtemp())
ck.save(result.checkpoint(EPOCHS), out / "model.bdn")
ck.save(ck.snapshot(result.model, config_text=result.config_text, inference_only=True), out / "model.export.bdn")
for f in ("model.bdn", "model.export.bdn"):
    top1, top5 = evaluate(out / f, test_ds)
    print(f"{f:18s} {(out / f).stat().st_size / 1024:7.1f} KiB  top-1 {top1:.3f}  top-5 {top5:.3f}")
