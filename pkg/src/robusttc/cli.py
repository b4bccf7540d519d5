"""Command-line entry point: ``robusttc <command> [options]``.

Every command writes ``<command>_manifest.json`` into ``--out-dir`` with the
full configuration, seeds and SHA-256 hashes of inputs and outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path

from robusttc import __version__

log = logging.getLogger("robusttc")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Collects inputs/outputs of one command and writes its manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.extra: dict = {}

    def out(self, name) -> Path:
        p = self.out_dir / name
        self.outputs.append(p)
        return p

    def input(self, path) -> Path:
        p = Path(path)
        self.inputs.append(p)
        return p

    def write_manifest(self):
        config = {k: v for k, v in vars(self.args).items() if k != "func"}
        manifest = {
            "command": self.args.command,
            "argv": self.argv,
            "config": config,
            "seed": self.args.seed,
            "threads": self.args.threads,
            "inputs": {str(p): _sha256(p) for p in self.inputs if p.is_file()},
            "outputs": {str(p): _sha256(p) for p in self.outputs if p.is_file()},
            "tool_version": __version__,
            **self.extra,
        }
        path = self.out_dir / f"{self.args.command}_manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
        return path


def _read_label_manifest(path: Path) -> dict[Path, str]:
    labels = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            p, name = line.split("\t")
        except ValueError:
            raise SystemExit(f"{path}:{n}: expected '<path>\\t<class name>'") from None
        pp = Path(p)
        labels[(pp if pp.is_absolute() else path.parent / pp).resolve()] = name.strip()
    return labels


def cmd_preprocess(args, run: Run):
    from robusttc.errors import RobustTCError
    from robusttc.flowio import (Dataset, assemble_flows, encode, parse_pcap, split_dataset,
                                 write_flowset)

    manifest = _read_label_manifest(run.input(args.labels))
    class_names = sorted(set(manifest.values()))
    class_id = {name: i for i, name in enumerate(class_names)}
    pcaps = [Path(p).resolve() for p in args.pcaps] if args.pcaps else list(manifest)
    fmt = "timeseries" if args.format == "ts" else "flat"
    samples = []
    for pcap in pcaps:
        name = manifest.get(pcap)
        label = None if name is None else class_id[name]
        skipped = Counter()
        try:
            packets = parse_pcap(run.input(pcap).read_bytes(), skipped)
            flows = assemble_flows(packets, lambda key: label, strict=args.strict)
        except RobustTCError as exc:
            raise type(exc)(f"{pcap}: {exc}") from exc
        kept = [f for f in flows if f.label is not None]
        if len(kept) < len(flows):
            log.warning("%s: dropped %d unlabeled flows", pcap, len(flows) - len(kept))
        samples.extend(encode(f, fmt) for f in kept)
    ds = Dataset.from_samples(samples, class_names, fmt=fmt)
    ds = split_dataset(ds, args.test_frac, args.val_frac, args.seed)
    write_flowset(ds, run.out(args.out))
    for name, count in ds.class_counts().items():
        print(f"{name}\t{count}")


def cmd_synth(args, run: Run):
    from robusttc.flowio import split_dataset, synth_dataset, write_flowset

    ds = synth_dataset(args.classes, args.flows_per_class, args.format, args.seed)
    ds = split_dataset(ds, args.test_frac, args.val_frac, args.seed)
    write_flowset(ds, run.out(args.out))
    for name, count in ds.class_counts().items():
        print(f"{name}\t{count}")


def cmd_preset(args, run: Run):
    from robusttc.hwcost import cost_report
    from robusttc.presets import preset

    spec = preset(args.name, args.num_classes)
    run.out(args.out).write_text(spec.to_json() + "\n")
    cost = cost_report(spec)
    print(spec.to_json())
    print(f"params={cost.params} flops={cost.flops} max_tensor={cost.max_tensor}", file=sys.stderr)


def _load_spec(args, ds):
    from robusttc.presets import preset
    from robusttc.tensornn import ArchSpec

    if args.spec:
        return ArchSpec.from_json(Path(args.spec).read_text())
    return preset(args.preset, ds.n_classes)


def _train_config(args):
    from robusttc.tensornn import TrainConfig

    return TrainConfig(args.epochs, args.lr, args.batch_size, args.patience, args.decay,
                       args.early_stop, args.seed)


def cmd_train(args, run: Run):
    from robusttc import plotting
    from robusttc.flowio import read_flowset
    from robusttc.hwcost import cost_report
    from robusttc.tensornn import build, evaluate, save_model, train

    ds = read_flowset(run.input(args.flowset))
    if args.spec:
        run.input(args.spec)
    spec = _load_spec(args, ds)
    model, hist = train(build(spec, args.seed), ds, _train_config(args))
    save_model(model, run.out(args.model_out))
    run.out("history.json").write_text(json.dumps(hist.to_dict(), indent=2))
    run.out("cost.json").write_text(cost_report(spec).to_json())
    plotting.plot_history(run.out("history.png"), hist, "training")
    acc = evaluate(model, ds, "test")
    run.extra["test_accuracy"] = acc
    print(f"best epoch {hist.best_epoch + 1}, val {hist.best_val_accuracy:.4f}, test {acc:.4f}")


def cmd_search(args, run: Run):
    from robusttc import plotting
    from robusttc.flowio import read_flowset
    from robusttc.hwcost import Thresholds
    from robusttc.nas import SearchConfig, search
    from robusttc.tensornn import ArchSpec, save_model

    ds = read_flowset(run.input(args.flowset))
    cfg = SearchConfig(args.generations, args.children,
                       Thresholds(args.max_params, args.max_flops, args.max_tensor),
                       _train_config(args), seed=args.seed, workers=args.workers)
    a0 = ArchSpec.from_json(run.input(args.a0).read_text()) if args.a0 else None
    best, model, slog = search(a0, ds, cfg)
    run.out("best_spec.json").write_text(best.to_json() + "\n")
    save_model(model, run.out("best_model.tnn"))
    run.out("search_log.jsonl").write_text(slog.to_jsonl())
    plotting.plot_search(run.out("search.png"), slog)
    run.extra["log_sha256"] = slog.digest()
    n_trained = len(slog.trained())
    best_acc = max(c.val_accuracy for c in slog.trained())
    print(f"trained {n_trained} candidates; best {best.spec_hash()} val {best_acc:.4f}")


def cmd_attack(args, run: Run):
    from robusttc.attacks import reports_to_csv, sweep
    from robusttc.flowio import read_flowset
    from robusttc.tensornn import load_model

    ds = read_flowset(run.input(args.flowset))
    model = load_model(run.input(args.model))
    rep = sweep(model, ds, args.grid, args.pgd_iters, args.seed, args.split,
                model_name=args.name or Path(args.model).stem, random_start=args.random_start)
    run.out(f"{args.prefix}.json").write_text(rep.to_json())
    run.out(f"{args.prefix}.csv").write_text(reports_to_csv([rep]))
    print(reports_to_csv([rep]), end="")
    print(f"clean accuracy {100 * rep.clean:.2f}")


def cmd_finetune(args, run: Run):
    from robusttc import plotting
    from robusttc.advtrain import AdvTrainConfig, finetune
    from robusttc.flowio import read_flowset
    from robusttc.tensornn import evaluate, load_model, save_model

    ds = read_flowset(run.input(args.flowset))
    model = load_model(run.input(args.model))
    cfg = AdvTrainConfig(args.epochs, args.eps, args.adv_fraction, args.lr, args.batch_size,
                         args.patience, args.decay, args.early_stop, args.seed)
    model, hist = finetune(model, ds, cfg)
    save_model(model, run.out(args.model_out))
    run.out("finetune_history.json").write_text(json.dumps(hist.to_dict(), indent=2))
    plotting.plot_history(run.out("finetune_history.png"), hist, "adversarial fine-tuning")
    print(f"epochs run {len(hist)}, test clean accuracy {evaluate(model, ds, 'test'):.4f}")


def cmd_report(args, run: Run):
    from robusttc.attacks import RobustnessReport
    from robusttc.presets import preset
    from robusttc.report import write_report
    from robusttc.tensornn import ArchSpec, load_model

    before = [RobustnessReport.from_json(run.input(p).read_text()) for p in args.before]
    after = [RobustnessReport.from_json(run.input(p).read_text()) for p in args.after or ()]
    specs = {}
    for item in args.complexity or ():
        name, _, src = item.partition("=")
        if src in ("flat", "ts"):
            specs[name] = preset(src)
        elif src.endswith(".json"):
            specs[name] = ArchSpec.from_json(run.input(src).read_text())
        else:
            specs[name] = load_model(run.input(src)).spec
    paths = write_report(run.out_dir, before, after, specs, figures=not args.no_figures)
    run.outputs.extend(paths.values())
    for p in paths.values():
        print(p)


def _add_train_flags(p, epochs=30, lr=0.004):
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--patience", type=int, default=3, help="plateau patience (epochs)")
    p.add_argument("--decay", type=float, default=0.5, help="plateau LR decay factor")
    p.add_argument("--early-stop", type=int, default=6, help="early-stopping patience (epochs)")


def _add_split_flags(p):
    p.add_argument("--test-frac", type=float, default=0.2)
    p.add_argument("--val-frac", type=float, default=0.2, help="validation share of the training pool")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="BLAS thread count (fix it for bit-reproducible runs)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="robusttc", parents=[common], description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="PCAP files -> FLOWSET")
    p.add_argument("pcaps", nargs="*", help="captures (default: every file in the label manifest)")
    p.add_argument("--labels", required=True, help="manifest: '<path>\\t<class name>' per line")
    p.add_argument("--format", choices=("flat", "ts"), default="flat")
    p.add_argument("--out", default="flows.fts")
    p.add_argument("--strict", action="store_true", help="fail on flows without a label")
    _add_split_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", parents=[common], help="synthetic FLOWSET")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--flows-per-class", type=int, default=2000)
    p.add_argument("--format", choices=("flat", "ts"), default="flat")
    p.add_argument("--out", default="synth.fts")
    _add_split_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preset", parents=[common], help="emit a reference architecture")
    p.add_argument("name")
    p.add_argument("--num-classes", type=int, default=20)
    p.add_argument("--out", default="spec.json")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("search", parents=[common], help="evolutionary hardware-aware search")
    p.add_argument("--flowset", required=True)
    p.add_argument("--a0", help="seed architecture JSON (default: random feasible block)")
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--children", type=int, default=15)
    p.add_argument("--max-params", type=int, default=70_000)
    p.add_argument("--max-flops", type=int, default=3_000_000)
    p.add_argument("--max-tensor", type=int, default=6_000)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    _add_train_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", parents=[common], help="train one architecture")
    p.add_argument("--flowset", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--preset", choices=("flat", "ts"), default="flat")
    g.add_argument("--spec", help="architecture JSON")
    p.add_argument("--model-out", default="model.tnn")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", parents=[common], help="FGSM/PGD epsilon sweep")
    p.add_argument("--flowset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--grid", type=float, nargs="+", default=[0.01, 0.03, 0.05, 0.07, 0.10, 0.15, 0.20])
    p.add_argument("--pgd-iters", type=int, default=10)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--name", help="model label used in the tables")
    p.add_argument("--prefix", default="robustness", help="output file stem")
    p.add_argument("--random-start", action="store_true", help="PGD starts from uniform noise in the ball")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("finetune", parents=[common], help="adversarial fine-tuning")
    p.add_argument("--flowset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--adv-fraction", type=float, default=0.5)
    p.add_argument("--model-out", default="finetuned.tnn")
    _add_train_flags(p, epochs=100, lr=0.0004)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("report", parents=[common], help="tables, deltas, complexity and figures")
    p.add_argument("--before", nargs="+", required=True, help="robustness report JSON files")
    p.add_argument("--after", nargs="+", help="matching post-fine-tuning reports")
    p.add_argument("--complexity", nargs="+", metavar="NAME=SRC",
                   help="complexity rows: SRC is a preset (flat/ts), spec JSON or checkpoint")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    from robusttc.errors import RobustTCError

    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    for name, default in (("seed", 0), ("threads", None), ("out_dir", "."), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            run = Run(args, argv)
            args.func(args, run)
            run.write_manifest()
    except RobustTCError as exc:
        print(f"robusttc: error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"robusttc: error [E_INPUT]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
