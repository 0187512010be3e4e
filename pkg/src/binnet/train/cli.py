"""Command-line entry point: ``binnet <subcommand> [options]``.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.
"""
from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .. import cost, kernels
from ..arch.config_io import build_from_config, loads_config
from ..errors import BinnetError
from . import checkpoint as ck
from .data import Dataset, load_idx_dataset, synthetic_dataset
from .experiments import FinetuneConfig, bn_absorption_demo, finetune_csv, pretrain_finetune_experiment, switch_drops
from .loop import OPTIMIZERS, PRECISIONS, LOG_HEADER, TrainConfig, evaluate, train

DEFAULT_ARCH = "desk-densenet.cfg"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def resolve_config(name: str) -> Path:
    """A filesystem path, or the name of a config shipped with the package."""
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("binnet") / "configs" / name
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no config file {name!r} (and no bundled config of that name)")


def _common(p, config_help="arch config file or bundled config name", multi_config=False):
    p.add_argument("--seed", type=int, default=0)
    if multi_config:
        p.add_argument("--config", action="append", help=config_help + " (repeatable)")
    else:
        p.add_argument("--config", default=None, help=config_help)
    p.add_argument("--out", type=Path, default=None, help="output directory")


def _data_args(p):
    p.add_argument("--train-images", type=Path)
    p.add_argument("--train-labels", type=Path)
    p.add_argument("--test-images", type=Path)
    p.add_argument("--test-labels", type=Path)
    p.add_argument("--n-train", type=int, default=5000, help="synthetic training samples")
    p.add_argument("--n-test", type=int, default=1000, help="synthetic test samples")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="binnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model; writes log.csv and checkpoint.bdn")
    _common(p)
    _data_args(p)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="adam-no-decay")
    p.add_argument("--milestones", type=int, nargs="*", default=None,
                   help="epochs after which lr decays by 10x (default 60%% and 80%% of --epochs)")
    p.add_argument("--precision", choices=tuple(PRECISIONS), default="fp32")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")
    p.add_argument("--finetune-from", type=Path, help="full-precision checkpoint to initialize from")
    p.add_argument("--full-precision", action="store_true", help="train the full-precision twin")
    p.add_argument("--fp-activation", choices=("relu", "clip"), default="relu")

    p = sub.add_parser("eval", help="top-1/top-5 of a checkpoint via the packed kernels")
    _common(p)
    _data_args(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--float-path", action="store_true", help="use the float path instead of packed kernels")

    p = sub.add_parser("cost", help="per-layer op and size CSV")
    _common(p, multi_config=True)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--accuracy", type=float, action="append",
                   help="one per --config; switches to model,flop_equivalent,accuracy output")

    p = sub.add_parser("bench", help="binary vs. naive float GEMM timing")
    _common(p)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--m", type=int, default=512)
    p.add_argument("--k", type=int, default=512)
    p.add_argument("--reps", type=int, default=3)

    p = sub.add_parser("demo-bn", help="scaling factors before and after BatchNorm")
    _common(p)

    p = sub.add_parser("demo-finetune", help="scratch vs. fp-pretrained binary training curves")
    _common(p)
    p.add_argument("--fp-epochs", type=int, default=3)
    p.add_argument("--binary-epochs", type=int, default=3)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=500)

    p = sub.add_parser("export", help="inference-only checkpoint with packed binary weights")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    return parser


def _datasets(args) -> tuple[Dataset, Dataset]:
    given = [args.train_images, args.train_labels, args.test_images, args.test_labels]
    if any(given):
        if not all(given):
            raise UsageError("IDX data needs all of --train-images/--train-labels/--test-images/--test-labels")
        return (load_idx_dataset(args.train_images, args.train_labels),
                load_idx_dataset(args.test_images, args.test_labels))
    return synthetic_dataset(args.n_train, args.n_test, seed=args.seed)


def _out_dir(args) -> Path:
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> None:
    if args.resume and args.finetune_from:
        raise UsageError("--resume and --finetune-from are exclusive")
    milestones = args.milestones if args.milestones is not None else [args.epochs * 6 // 10, args.epochs * 8 // 10]
    cfg = TrainConfig(resolve_config(args.config or DEFAULT_ARCH), optimizer=args.optimizer, lr=args.lr,
                      milestones=tuple(m for m in milestones if m > 0), epochs=args.epochs,
                      batch_size=args.batch_size, seed=args.seed, precision=args.precision,
                      init="finetune-from-fp" if args.finetune_from else "scratch",
                      init_checkpoint=args.finetune_from, binarize=not args.full_precision,
                      fp_activation=args.fp_activation)
    train_ds, test_ds = _datasets(args)
    out = _out_dir(args)
    log_path, ckpt_path = out / "log.csv", out / "checkpoint.bdn"
    resume = ck.load(args.resume) if args.resume else None
    print(LOG_HEADER, flush=True)

    def on_epoch(epoch, result):
        new = [r for r in result.log.rows if r.epoch == epoch]
        for r in new:
            print(r.csv(), flush=True)
        type(result.log)(new).append_csv(log_path)
        ck.save(result.checkpoint(epoch), ckpt_path)

    result = train(cfg, train_ds, test_ds, resume=resume, epoch_callback=on_epoch)
    if not result.log.rows:
        ck.save(result.checkpoint(0), ckpt_path)


def cmd_eval(args) -> None:
    _, test_ds = _datasets(args)
    arch = resolve_config(args.config) if args.config else None
    top1, top5 = evaluate(args.checkpoint, test_ds, arch, packed=not args.float_path)
    print("top1,top5")
    print(f"{top1:.6f},{top5:.6f}")


def cmd_cost(args) -> None:
    configs = args.config or ["resnete18.cfg"]
    reports = [cost.analyze(build_from_config(loads_config(resolve_config(c).read_text())), args.batch)
               for c in configs]
    if args.accuracy is not None:
        if len(args.accuracy) != len(configs):
            raise UsageError("give one --accuracy per --config")
        sys.stdout.write(cost.accuracy_cost_csv([(Path(c).stem, r, a) for c, r, a in zip(configs, reports, args.accuracy)]))
        return
    for c, r in zip(configs, reports):
        if len(configs) > 1:
            print(f"# {c}")
        sys.stdout.write(r.to_csv())
        print(f"# model_size_mb,{cost.model_size_mb(r):.4f}")


def cmd_bench(args) -> None:
    kernels.set_threads()
    results = kernels.bench_gemm(kernels.GemmDims(args.n, args.m, args.k), args.reps, args.seed)
    print(kernels.BenchResult.HEADER)
    for r in results:
        print(r.csv_row(), flush=True)


def cmd_demo_bn(args) -> None:
    print("metric,value")
    print("\n".join(bn_absorption_demo(args.seed).lines()))


def cmd_demo_finetune(args) -> None:
    cfg = FinetuneConfig(fp_epochs=args.fp_epochs, binary_epochs=args.binary_epochs, seed=args.seed)
    if args.config:
        cfg = FinetuneConfig(loads_config(resolve_config(args.config).read_text()), args.fp_epochs,
                             args.binary_epochs, seed=args.seed)
    train_ds, test_ds = synthetic_dataset(args.n_train, args.n_test, seed=args.seed)
    rows = pretrain_finetune_experiment(cfg, train_ds, test_ds)
    text = finetune_csv(rows)
    sys.stdout.write(text)
    for arm, drop in switch_drops(rows).items():
        print(f"# {arm}: top-1 change at the binarization switch {-drop:+.4f}", file=sys.stderr)
    if args.out:
        (_out_dir(args) / "finetune.csv").write_text(text)


def cmd_export(args) -> None:
    from ..model import Model
    src = ck.load(args.checkpoint)
    text = ck.config_text(src)
    arch = loads_config(resolve_config(args.config).read_text() if args.config else text or "")
    model = Model(build_from_config(arch))
    ck.restore(model, src)
    out = _out_dir(args) / (args.checkpoint.stem + ".export.bdn")
    ck.save(ck.snapshot(model, config_text=text, inference_only=True), out)
    print(out)


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "cost": cmd_cost, "bench": cmd_bench, "demo-bn": cmd_demo_bn,
            "demo-finetune": cmd_demo_finetune, "export": cmd_export}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    except (BinnetError, OSError, ValueError) as exc:
        print(f"binnet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
