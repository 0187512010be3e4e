"""Training and evaluation loops."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..arch.config_io import build_from_config, dumps_config, loads_config
from ..arch.builders import DenseNetConfig, ResNetEConfig
from ..arch.spec import ArchSpec
from ..errors import DivergedLoss, InvalidConfig, ShapeMismatch
from ..kernels import set_threads
from ..model import Model
from ..nn import SGD, Adam, Tape, Var, softmax_cross_entropy
from . import checkpoint as ck
from .data import Dataset

OPTIMIZERS = ("adam-no-decay", "sgd-momentum-decay")
INIT_MODES = ("scratch", "finetune-from-fp")
PRECISIONS = {"fp32": np.float32, "fp64": np.float64}
LOG_HEADER = "epoch,split,top1,top5,loss,seconds"


@dataclass(frozen=True)
class TrainConfig:
    arch: ResNetEConfig | DenseNetConfig | str | Path
    optimizer: str = "adam-no-decay"
    lr: float = 1e-3
    milestones: tuple[int, ...] = ()  # epochs after which lr is multiplied by decay
    decay: float = 0.1
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    precision: str = "fp32"
    init: str = "scratch"
    init_checkpoint: ck.Checkpoint | str | Path | None = None
    binarize: bool = True
    fp_activation: str = "relu"
    momentum: float = 0.9
    weight_decay: float = 1e-4

    def validate(self):
        if self.optimizer not in OPTIMIZERS:
            raise InvalidConfig(f"optimizer must be one of {OPTIMIZERS}")
        if self.init not in INIT_MODES:
            raise InvalidConfig(f"init must be one of {INIT_MODES}")
        if self.init == "finetune-from-fp" and self.init_checkpoint is None:
            raise InvalidConfig("finetune-from-fp needs init_checkpoint")
        if self.precision not in PRECISIONS:
            raise InvalidConfig(f"precision must be one of {tuple(PRECISIONS)}")
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise InvalidConfig("epochs >= 0, batch_size >= 1 and lr > 0 required")
        if self.fp_activation not in ("relu", "clip"):
            raise InvalidConfig("fp_activation must be relu or clip")

    @property
    def arch_config(self) -> ResNetEConfig | DenseNetConfig:
        if isinstance(self.arch, (str, Path)):
            return loads_config(Path(self.arch).read_text())
        return self.arch

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.decay ** sum(epoch >= m for m in self.milestones)


@dataclass
class LogRow:
    epoch: int
    split: str
    top1: float
    top5: float
    loss: float
    seconds: float

    def csv(self, with_time: bool = True) -> str:
        secs = f"{self.seconds:.3f}" if with_time else "0"
        return f"{self.epoch},{self.split},{self.top1:.6f},{self.top5:.6f},{self.loss:.6f},{secs}"


@dataclass
class TrainLog:
    rows: list[LogRow] = field(default_factory=list)

    def to_csv(self, with_time: bool = True) -> str:
        return "\n".join([LOG_HEADER] + [r.csv(with_time) for r in self.rows]) + "\n"

    def append_csv(self, path: str | Path, with_time: bool = True) -> None:
        """Append rows to ``path``, writing the header only for a new file."""
        path = Path(path)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a") as fh:
            if new:
                fh.write(LOG_HEADER + "\n")
            fh.writelines(r.csv(with_time) + "\n" for r in self.rows)

    def final(self, split: str = "test") -> LogRow:
        return [r for r in self.rows if r.split == split][-1]


@dataclass
class TrainResult:
    model: Model
    optimizer: Adam | SGD
    log: TrainLog
    config_text: str

    def checkpoint(self, epoch: int) -> ck.Checkpoint:
        return ck.snapshot(self.model, self.optimizer, {"epoch": epoch}, self.config_text)


def topk_correct(logits: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Per-sample hit flags; equal logits rank the lower class index first."""
    k = min(k, logits.shape[1])
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return (order == labels[:, None]).any(axis=1)


def make_optimizer(cfg: TrainConfig, params):
    if cfg.optimizer == "adam-no-decay":
        return Adam(params, lr=cfg.lr)
    return SGD(params, lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)


def build_model(cfg: TrainConfig) -> tuple[Model, str]:
    arch = cfg.arch_config
    model = Model(build_from_config(arch), seed=cfg.seed, dtype=PRECISIONS[cfg.precision])
    return model, dumps_config(arch)


def _check_data(spec: ArchSpec, ds: Dataset) -> None:
    if ds.images.shape[1:] != tuple(spec.input_shape):
        raise ShapeMismatch(f"dataset images {ds.images.shape[1:]} do not fit {spec.name} {spec.input_shape}")
    n_out = spec[spec.output].out_channels
    if ds.num_classes > n_out or (len(ds) and ds.labels.max() >= n_out):
        raise ShapeMismatch(f"{ds.num_classes} classes but the model has {n_out} outputs")


def evaluate_model(model: Model, ds: Dataset, packed: bool = True, batch_size: int = 256) -> tuple[float, float, float]:
    """(top1, top5, mean loss) in eval mode, through the packed kernels by default."""
    _check_data(model.spec, ds)
    if len(ds) == 0:
        return 0.0, 0.0, 0.0
    model.set_packed(packed)
    try:
        logits = model.predict(ds.normalized(model.dtype), batch_size)
    finally:
        model.set_packed(False)
    loss = float(softmax_cross_entropy(Var(logits), ds.labels).data)
    return (float(topk_correct(logits, ds.labels, 1).mean()), float(topk_correct(logits, ds.labels, 5).mean()), loss)


def train_step(model: Model, opt, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    tape = Tape()
    logits = model.forward(x, tape)
    loss = softmax_cross_entropy(logits, y, tape)
    value = float(loss.data)
    if not np.isfinite(value):
        raise DivergedLoss(f"loss became {value}")
    opt.zero_grad()
    tape.backward(loss)
    opt.step()
    return value, logits.data


def train(cfg: TrainConfig, train_ds: Dataset, test_ds: Dataset | None = None,
          resume: ck.Checkpoint | None = None, epoch_callback=None) -> TrainResult:
    """Train per ``cfg``; one ``train`` and (if given) one ``test`` log row per epoch.

    Batches are shuffled with a generator seeded by ``(seed, epoch)``, so a
    run resumed from an epoch-boundary checkpoint replays the same steps.
    """
    cfg.validate()
    set_threads(1)  # deterministic kernels
    model, text = build_model(cfg)
    _check_data(model.spec, train_ds)
    model.set_binarize(cfg.binarize, cfg.fp_activation)
    opt = make_optimizer(cfg, model.parameters())
    start = 0
    if cfg.init == "finetune-from-fp" and resume is None:
        init = cfg.init_checkpoint
        ck.restore(model, init if isinstance(init, ck.Checkpoint) else ck.load(init))
    if resume is not None:
        start = ck.restore(model, resume, opt).get("epoch", 0)
    result = TrainResult(model, opt, TrainLog(), text)
    for epoch in range(start, cfg.epochs):
        t0 = time.perf_counter()
        opt.lr = cfg.lr_at(epoch)
        model.train()
        rng = np.random.default_rng([cfg.seed, epoch])
        losses, hits1, hits5, n = 0.0, 0, 0, 0
        for x, y in train_ds.batches(cfg.batch_size, rng, model.dtype):
            loss, logits = train_step(model, opt, x, y)
            losses += loss * len(y)
            hits1 += int(topk_correct(logits, y, 1).sum())
            hits5 += int(topk_correct(logits, y, 5).sum())
            n += len(y)
        result.log.rows.append(LogRow(epoch + 1, "train", hits1 / n, hits5 / n, losses / n,
                                      time.perf_counter() - t0))
        if test_ds is not None:
            top1, top5, loss = evaluate_model(model, test_ds, packed=cfg.binarize)
            result.log.rows.append(LogRow(epoch + 1, "test", top1, top5, loss, time.perf_counter() - t0))
        if epoch_callback is not None:
            epoch_callback(epoch + 1, result)
    return result


def evaluate(checkpoint: ck.Checkpoint | str | Path, ds: Dataset,
             arch: ResNetEConfig | DenseNetConfig | str | Path | None = None, packed: bool = True):
    """Top-1/top-5 of a saved model; the arch comes from ``arch`` or the checkpoint itself."""
    if not isinstance(checkpoint, ck.Checkpoint):
        checkpoint = ck.load(checkpoint)
    if arch is None:
        text = ck.config_text(checkpoint)
        if text is None:
            raise InvalidConfig("checkpoint carries no arch config; pass one explicitly")
        arch = loads_config(text)
    elif isinstance(arch, (str, Path)):
        arch = loads_config(Path(arch).read_text())
    model = Model(build_from_config(arch))
    ck.restore(model, checkpoint)
    top1, top5, _ = evaluate_model(model, ds, packed=packed)
    return top1, top5
