"""Command-line entry point: ``topogat {inspect,train,benchmark,export-embeddings}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .graph import graph_stats
from .models import DISPLAY_NAMES, VARIANTS, ModelSpec, build_model, count_parameters, load_checkpoint, save_checkpoint
from .training import NumericalError, TrainConfig, export_embeddings, run_benchmark, run_single
from .tudataset import Dataset, TUFormatError, parse_tu_dataset

DATA_DIR_ENV = "TOPOGAT_DATA_DIR"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _parse_seeds(text: str) -> tuple[int, ...]:
    """``"100-104"`` or ``"100,102,7"``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError(f"no seeds in {text!r}")
    return tuple(seeds)


def _dataset_dir(args) -> Path:
    root = args.data_dir or os.environ.get(DATA_DIR_ENV)
    if not root:
        raise UsageError(f"no data directory: pass --data-dir or set {DATA_DIR_ENV}")
    root = Path(root)
    # accept either the dataset folder itself or its parent
    nested = root / args.dataset
    return nested if (nested / f"{args.dataset}_A.txt").exists() else root


def _load(args) -> Dataset:
    return parse_tu_dataset(_dataset_dir(args), args.dataset)


def _config(args) -> TrainConfig:
    kwargs = {}
    for name in ("lr", "epochs", "batch_size", "train_fraction", "dropout"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    if getattr(args, "seeds", None):
        kwargs["seeds"] = args.seeds
    elif getattr(args, "seed", None) is not None:
        kwargs["seeds"] = (args.seed,)
    if getattr(args, "sample_std", False):
        kwargs["sample_std"] = True
    if getattr(args, "normalize_topo", False):
        kwargs["normalize_topo"] = True
    try:
        return TrainConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stamped(out: Path, stem: str, suffix: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    path, n = out / f"{stem}-{stamp}{suffix}", 1
    while path.exists():
        n += 1
        path = out / f"{stem}-{stamp}-{n}{suffix}"
    return path


def _write_records(path: Path, records: list[dict]) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def _print_table(headers: list[str], rows: list[list[str]]) -> None:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    print("  ".join("-" * w for w in widths))
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)))


# --- commands ----------------------------------------------------------------

def cmd_inspect(args) -> int:
    ds = _load(args)
    count, mean_nodes, mean_edges = graph_stats(ds.graphs)
    if args.format == "records":
        print(json.dumps({"dataset": ds.name, "graphs": count, "classes": ds.num_classes,
                          "feature_dim": ds.feature_dim, "mean_nodes": mean_nodes,
                          "mean_edges": mean_edges}, sort_keys=True))
    else:
        print(f"{ds.name}: {count} graphs, {ds.num_classes} classes, d={ds.feature_dim}, "
              f"{mean_nodes:.1f} nodes, {mean_edges:.1f} edges")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config(args)
    ds = _load(args)
    out = _out_dir(args)
    seed = config.seeds[0]
    result, params = run_single(ds, args.model, seed, config)
    ckpt = out / f"{ds.name}-{args.model}-seed{seed}.npz"
    save_checkpoint(params, ckpt)
    record = result.record()
    _write_records(_stamped(out, f"train-{ds.name}-{args.model}", ".jsonl"), [record])
    _write_records(_stamped(out, f"timing-{ds.name}-{args.model}", ".jsonl"), [result.record(timing=True)])
    if args.format == "records":
        print(json.dumps(record, sort_keys=True))
    else:
        print(f"{ds.name} {args.model} seed={seed}: accuracy={result.accuracy:.4f} "
              f"weighted_f1={result.weighted_f1:.4f} params={result.params} "
              f"loss={result.final_train_loss:.4f} ({result.seconds:.1f}s) -> {ckpt}")
    return EXIT_OK


def parameter_table(ds: Dataset, variants=VARIANTS) -> list[tuple[str, int]]:
    return [(v, count_parameters(build_model(ModelSpec.for_dataset(v, ds.feature_dim, ds.num_classes),
                                             np.random.default_rng(0))))
            for v in variants]


def cmd_benchmark(args) -> int:
    config = _config(args)
    ds = _load(args)
    out = _out_dir(args)
    variants = args.models or list(VARIANTS)
    results, aggs = run_benchmark(ds, variants, config, jobs=args.jobs)
    params = parameter_table(ds, variants)

    _write_records(_stamped(out, f"benchmark-{ds.name}", ".jsonl"), [r.record() for r in results])
    _write_records(_stamped(out, f"aggregate-{ds.name}", ".jsonl"), [vars(a) for a in aggs])
    _write_records(_stamped(out, f"timing-{ds.name}", ".jsonl"), [r.record(timing=True) for r in results])

    if args.format == "records":
        for r in results:
            print(json.dumps(r.record(), sort_keys=True))
        for a in aggs:
            print(json.dumps({"aggregate": True, **vars(a)}, sort_keys=True))
        return EXIT_OK
    print(f"Classification on {ds.name} (mean +/- std over {len(config.seeds)} seeds, %)")
    _print_table(["Model", "Acc.", "F1"],
                 [[DISPLAY_NAMES[a.variant], f"{100 * a.acc_mean:.2f} +/- {100 * a.acc_std:.2f}",
                   f"{100 * a.f1_mean:.2f} +/- {100 * a.f1_std:.2f}"] for a in aggs])
    print()
    print(f"Parameters on {ds.name}")
    _print_table(["Model", "Parameters"], [[DISPLAY_NAMES[v], f"{n:,}"] for v, n in params])
    return EXIT_OK


def cmd_export_embeddings(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise TUFormatError(f"missing checkpoint: {ckpt}")
    params = load_checkpoint(ckpt)
    ds = _load(args)
    rows = export_embeddings(params, ds)
    dest = Path(args.output) if args.output else _out_dir(args) / f"{ckpt.stem}-embeddings.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    width = len(rows[0][2]) if rows else 0
    with dest.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["graph_id", "label"] + [f"e{i}" for i in range(width)])
        for gid, label, emb in rows:
            writer.writerow([gid, label] + [repr(float(x)) for x in emb])
    print(f"wrote {len(rows)} embeddings to {dest}")
    return EXIT_OK


# --- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data-dir", help=f"TU dataset root (default: ${DATA_DIR_ENV})")
    common.add_argument("--dataset", required=True, help="dataset name, e.g. MUTAG")
    common.add_argument("--format", choices=("table", "records"), default="table")
    common.add_argument("-v", "--verbose", action="count", default=0)

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--epochs", type=int)
    training.add_argument("--lr", type=float)
    training.add_argument("--batch-size", type=int)
    training.add_argument("--train-fraction", type=float)
    training.add_argument("--dropout", type=float)
    training.add_argument("--normalize-topo", action="store_true",
                          help="min-max scale degree and clustering per graph (default: raw)")
    training.add_argument("--out", default="results", help="output directory")

    parser = _Parser(prog="topogat", description="Topology-augmented graph attention for graph classification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("inspect", parents=[common], help="print dataset statistics")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("train", parents=[common, training], help="train one model on one seed")
    p.add_argument("--model", required=True, choices=VARIANTS)
    p.add_argument("--seed", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("benchmark", parents=[common, training], help="all variants over several seeds")
    p.add_argument("--seeds", type=_parse_seeds, default=None, help="e.g. 100-104 or 100,101")
    p.add_argument("--models", nargs="+", choices=VARIANTS, help="subset of variants (default: all)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--sample-std", action="store_true", help="n-1 denominator for the std")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("export-embeddings", parents=[common], help="write pooled graph embeddings as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default="results")
    p.add_argument("--output", help="CSV path (default: next to --out)")
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"topogat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"topogat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TUFormatError, OSError, ValueError) as exc:
        print(f"topogat: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"topogat: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
