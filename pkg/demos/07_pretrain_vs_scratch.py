"""
Full-precision pretraining versus training binary from scratch
==============================================================

Three arms share an epoch budget: binary from scratch with Adam, and two
that first train the full-precision twin (ReLU or clip in place of sign)
with momentum SGD before switching to binary. Watch the accuracy at the
switch.
"""
from binnet.train.data import synthetic_dataset
from binnet.train.experiments import FinetuneConfig, finetune_csv, pretrain_finetune_experiment, switch_drops

train_ds, test_ds = synthetic_dataset(2000, 500, seed=0)
rows = pretrain_finetune_experiment(FinetuneConfig(fp_epochs=3, binary_epochs=3), train_ds, test_ds)
print(finetune_csv(rows))
for arm, drop in switch_drops(rows).items():
    print(f"{arm}: top-1 {-drop:+.3f} at the binarization switch")
