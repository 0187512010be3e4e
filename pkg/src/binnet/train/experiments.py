"""Small ablations: scaling factors under BatchNorm, and pretraining vs. training from scratch."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..arch.builders import DenseNetConfig, desk_densenet_config
from ..kernels import ConvGeometry
from ..nn import functional as F
from ..nn.binary import compute_alpha, compute_K
from ..tensor import sign
from .data import Dataset
from .loop import TrainConfig, train


@dataclass(frozen=True)
class AbsorptionGeometry:
    batch: int = 8
    in_channels: int = 16
    out_channels: int = 16
    size: int = 12
    kernel: int = 3
    stride: int = 1


@dataclass
class AbsorptionReport:
    err_unscaled: float  # mean |binary - fp| before normalization
    err_alpha: float
    err_alpha_K: float
    err_unscaled_bn: float  # same after normalization
    err_alpha_bn: float
    err_alpha_K_bn: float
    max_bn_gap_alpha: float  # max |BN(alpha*Y) - BN(Y)|
    max_bn_gap_alpha_K: float

    def lines(self) -> list[str]:
        return [f"{k},{v:.3e}" for k, v in vars(self).items()]


def _bn(y: np.ndarray) -> np.ndarray:
    # eps = 0: per-channel scaling then cancels exactly, up to rounding
    out, _ = F.batchnorm_forward(y, np.ones(y.shape[1]), np.zeros(y.shape[1]), eps=0.0)
    return out


def bn_absorption_demo(seed: int = 0, geometry: AbsorptionGeometry = AbsorptionGeometry()) -> AbsorptionReport:
    """Compare fp, binary, and scaled binary convolutions before and after BatchNorm (float64)."""
    g = geometry
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((g.batch, g.in_channels, g.size, g.size))
    w = rng.standard_normal((g.out_channels, g.in_channels, g.kernel, g.kernel)) * 0.1
    geo = ConvGeometry(stride=g.stride)
    y_fp, _ = F.conv2d_forward(x, w, None, geo)
    y_bin, _ = F.conv2d_forward(sign(x), sign(w), None, geo)
    alpha = compute_alpha(w).reshape(1, -1, 1, 1)
    y_a = y_bin * alpha
    y_ak = y_a * compute_K(x, (g.kernel, g.kernel), geo)
    # compare in a common scale: fp output normalized by BN is scale-free
    bn_fp, bn_bin, bn_a, bn_ak = _bn(y_fp), _bn(y_bin), _bn(y_a), _bn(y_ak)
    mae = lambda a, b: float(np.abs(a - b).mean())
    return AbsorptionReport(mae(y_bin, y_fp), mae(y_a, y_fp), mae(y_ak, y_fp),
                            mae(bn_bin, bn_fp), mae(bn_a, bn_fp), mae(bn_ak, bn_fp),
                            float(np.abs(bn_a - bn_bin).max()), float(np.abs(bn_ak - bn_bin).max()))


@dataclass(frozen=True)
class FinetuneConfig:
    arch: DenseNetConfig = desk_densenet_config()
    fp_epochs: int = 3
    binary_epochs: int = 3
    batch_size: int = 64
    adam_lr: float = 3e-3
    sgd_lr: float = 0.05
    seed: int = 0

    @property
    def total_epochs(self) -> int:
        return self.fp_epochs + self.binary_epochs


FINETUNE_HEADER = "arm,epoch,phase,top1,top5,loss"


@dataclass
class CurveRow:
    arm: str
    epoch: int
    phase: str
    top1: float
    top5: float
    loss: float

    def csv(self) -> str:
        return f"{self.arm},{self.epoch},{self.phase},{self.top1:.6f},{self.top5:.6f},{self.loss:.6f}"


def _milestones(n: int) -> tuple[int, ...]:
    return tuple(sorted({max(1, n // 2), max(1, 3 * n // 4)})) if n > 1 else ()


def _test_rows(arm, phase, log, offset):
    return [CurveRow(arm, r.epoch + offset, phase, r.top1, r.top5, r.loss) for r in log.rows if r.split == "test"]


def pretrain_finetune_experiment(cfg: FinetuneConfig, train_ds: Dataset, test_ds: Dataset) -> list[CurveRow]:
    """Three arms over the same epoch budget, one test-accuracy row per arm and epoch.

    ``scratch`` trains the binary net with Adam throughout. ``relu`` and
    ``clip`` first train the full-precision twin (that activation in place of
    sign) with momentum SGD, then binarize and continue with Adam.
    """
    adam = TrainConfig(cfg.arch, optimizer="adam-no-decay", lr=cfg.adam_lr, batch_size=cfg.batch_size,
                       seed=cfg.seed)
    rows = []
    scratch = train(replace(adam, epochs=cfg.total_epochs, milestones=_milestones(cfg.total_epochs)),
                    train_ds, test_ds)
    rows += _test_rows("scratch", "binary", scratch.log, 0)
    for act in ("relu", "clip"):
        fp = train(TrainConfig(cfg.arch, optimizer="sgd-momentum-decay", lr=cfg.sgd_lr, epochs=cfg.fp_epochs,
                               milestones=_milestones(cfg.fp_epochs), batch_size=cfg.batch_size, seed=cfg.seed,
                               binarize=False, fp_activation=act), train_ds, test_ds)
        rows += _test_rows(act, "fp", fp.log, 0)
        binary = train(replace(adam, epochs=cfg.binary_epochs, milestones=_milestones(cfg.binary_epochs),
                               init="finetune-from-fp", init_checkpoint=fp.checkpoint(cfg.fp_epochs)),
                       train_ds, test_ds)
        rows += _test_rows(act, "binary", binary.log, cfg.fp_epochs)
    return rows


def finetune_csv(rows: list[CurveRow]) -> str:
    return "\n".join([FINETUNE_HEADER] + [r.csv() for r in rows]) + "\n"


def switch_drops(rows: list[CurveRow]) -> dict[str, float]:
    """Per fine-tuned arm: accuracy of the last fp epoch minus the first binary epoch."""
    out = {}
    for arm in sorted({r.arm for r in rows if r.phase == "fp"}):
        fp = [r for r in rows if r.arm == arm and r.phase == "fp"]
        bi = [r for r in rows if r.arm == arm and r.phase == "binary"]
        if fp and bi:
            out[arm] = fp[-1].top1 - bi[0].top1
    return out
