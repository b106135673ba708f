"""Command-line entry points: ingest, synth, locality, train, eval, recommend, compare, bench."""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .checkpoint import restore_model, save_checkpoint
from .config import CHECKPOINT_PATH, GRAPH_CACHE_PATH, TrainConfig, dump_config, ensure_model_dir, load_config
from .data_loader import load_dataset, load_graph_cache, save_graph_cache
from .errors import CtxGNNError, InvalidConfig
from .evaluation import LOCALITY_DEPTHS, evaluate_split, locality_score
from .experiments import compare_variants, summarize, time_train_steps
from .graph import SPLITS, TaskSpec, TemporalHeteroGraph
from .serving import recommend_topk, rankings_to_csv
from .synth import SynthConfig, generate_synthetic, write_synthetic
from .trainer import Trainer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"\n{self.prog}: error: {message}\n")


def _add_graph_source(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--schema", type=Path, help="JSON manifest describing the tables")
    source.add_argument("--cache", type=Path, help="Graph cache written by `ingest`")


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key=value training config file")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--epochs", type=int, default=None, help="Override max_epochs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctxgnn", description="Context-aware GNN recommender on temporal graphs.")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log progress to stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", help="Build the binary graph cache from CSV tables")
    ingest.add_argument("--schema", type=Path, required=True)
    ingest.add_argument("--out", type=Path, default=GRAPH_CACHE_PATH)

    synth = commands.add_parser("synth", help="Write a seeded synthetic dataset")
    synth.add_argument("--out", type=Path, required=True, help="Output directory")
    synth.add_argument("--users", type=int, default=200)
    synth.add_argument("--items", type=int, default=100)
    synth.add_argument("--interactions", type=int, default=2000)
    synth.add_argument("--repeat-prob", type=float, default=0.5)
    synth.add_argument("--communities", type=int, default=5)
    synth.add_argument("--affinity", type=float, default=0.7)
    synth.add_argument("--explorer-fraction", type=float, default=0.0)
    synth.add_argument("--window", type=int, default=None, help="Interactions per evaluation window")
    synth.add_argument("--seed", type=int, default=0)

    locality = commands.add_parser("locality", help="k-hop locality scores per split")
    _add_graph_source(locality)
    locality.add_argument("--split", choices=SPLITS, action="append", default=None)
    locality.add_argument("--k", type=int, choices=LOCALITY_DEPTHS, action="append", default=None)

    train = commands.add_parser("train", help="Fit a model and write a checkpoint")
    _add_graph_source(train)
    _add_training_flags(train)
    variant = train.add_mutually_exclusive_group()
    variant.add_argument("--pair-only", action="store_true", help="Rank only subgraph-local items")
    variant.add_argument("--tower-only", action="store_true", help="Score every item with the two-tower head")
    train.add_argument("--out", type=Path, default=CHECKPOINT_PATH)
    train.add_argument("--report", type=Path, default=None, help="Write the training report here")

    evaluate = commands.add_parser("eval", help="Evaluate a checkpoint on a split")
    _add_graph_source(evaluate)
    evaluate.add_argument("--checkpoint", type=Path, default=CHECKPOINT_PATH)
    evaluate.add_argument("--split", choices=SPLITS, default="test")
    evaluate.add_argument("--locality", action="store_true", help="Attach locality scores s1..s3")
    evaluate.add_argument("--csv", type=Path, default=None, help="Also write split,metric,value rows")

    recommend = commands.add_parser("recommend", help="Top-k items for one user as CSV")
    _add_graph_source(recommend)
    recommend.add_argument("--checkpoint", type=Path, default=CHECKPOINT_PATH)
    recommend.add_argument("--user", type=int, required=True)
    recommend.add_argument("--time", type=int, default=None, help="Seed time (default: test cutoff)")
    recommend.add_argument("--k", type=int, default=None, help="List length (default: task eval_k)")
    recommend.add_argument("--out", type=Path, default=None, help="CSV path (default: stdout)")

    compare = commands.add_parser("compare", help="Full vs pair-only vs tower-only across seeds")
    _add_graph_source(compare)
    _add_training_flags(compare)
    compare.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    compare.add_argument("--groups", type=Path, default=None, help="user_id,group CSV for subpopulation MAP")
    compare.add_argument("--split", choices=SPLITS, default="test")

    bench = commands.add_parser("bench", help="Seconds per training step as the class budget grows")
    _add_graph_source(bench)
    _add_training_flags(bench)
    bench.add_argument("--classes", type=int, nargs="+", default=[64, 256, 1024, 4096])
    bench.add_argument("--steps", type=int, default=3)
    return parser


def _load_graph(args: argparse.Namespace) -> Tuple[TemporalHeteroGraph, TaskSpec]:
    if getattr(args, "cache", None) is not None:
        return load_graph_cache(args.cache)
    return load_dataset(args.schema)


def _training_config(args: argparse.Namespace) -> TrainConfig:
    config = load_config(args.config) if args.config is not None else TrainConfig()
    return config.with_overrides(
        seed=args.seed,
        max_epochs=args.epochs,
        pair_only=True if getattr(args, "pair_only", False) else None,
        tower_only=True if getattr(args, "tower_only", False) else None,
    )


def _read_groups(path: Path) -> Dict[str, List[int]]:
    groups: Dict[str, List[int]] = {}
    with path.open("r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            groups.setdefault(row["group"], []).append(int(row["user_id"]))
    return groups


def cmd_ingest(args: argparse.Namespace) -> int:
    graph, task = load_dataset(args.schema)
    save_graph_cache(graph, task, args.out)
    print(f"users={graph.num_users} items={graph.num_items} cache={args.out}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        num_users=args.users,
        num_items=args.items,
        num_train_interactions=args.interactions,
        repeat_prob=args.repeat_prob,
        community_count=args.communities,
        community_affinity=args.affinity,
        explorer_fraction=args.explorer_fraction,
        eval_window_interactions=args.window,
        seed=args.seed,
    )
    manifest = write_synthetic(generate_synthetic(cfg), args.out)
    print(manifest)
    return EXIT_OK


def cmd_locality(args: argparse.Namespace) -> int:
    graph, task = _load_graph(args)
    splits = args.split or list(SPLITS)
    depths = args.k or list(LOCALITY_DEPTHS)
    if len(splits) == 1 and len(depths) == 1:
        print(f"{locality_score(graph, task, splits[0], depths[0]):.4f}")
        return EXIT_OK
    print("split," + ",".join(f"k={d}" for d in depths))
    for split in splits:
        print(split + "," + ",".join(f"{locality_score(graph, task, split, d):.4f}" for d in depths))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    graph, task = _load_graph(args)
    config = _training_config(args)
    trainer = Trainer(graph, task, config)
    report = trainer.fit()
    save_checkpoint(trainer.model.params, config, args.out)
    if args.report is not None:
        args.report.write_text(dump_config(config) + report.to_text(), encoding="utf-8")
    digest = hashlib.sha256(Path(args.out).read_bytes()).hexdigest()
    print(report.to_text(), end="")
    print(f"checkpoint={args.out}\nsha256={digest}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    graph, task = _load_graph(args)
    model, config = restore_model(args.checkpoint, graph)
    report = evaluate_split(graph, model, task, args.split, config, with_locality=args.locality)
    print(report.to_text(), end="")
    if args.csv is not None:
        with args.csv.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(("split", "metric", "value"))
            writer.writerows(report.to_csv_rows())
    return EXIT_OK


def cmd_recommend(args: argparse.Namespace) -> int:
    graph, task = _load_graph(args)
    model, _ = restore_model(args.checkpoint, graph)
    T = task.test_cutoff if args.time is None else args.time
    k = task.eval_k if args.k is None else args.k
    if k < 1:
        raise InvalidConfig("--k must be >= 1")
    ranking = recommend_topk(graph, model, args.user, T, k)
    if args.out is None:
        rankings_to_csv([ranking], sys.stdout)
    else:
        with args.out.open("w", encoding="utf-8", newline="") as handle:
            rankings_to_csv([ranking], handle)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    graph, task = _load_graph(args)
    groups = _read_groups(args.groups) if args.groups is not None else None
    results = compare_variants(graph, task, _training_config(args), args.seeds, groups, args.split)
    print("variant,seed,group,users,map")
    for r in results:
        print(f"{r.variant},{r.seed},{r.group},{r.users},{r.map:.4f}")
    for variant, by_group in summarize(results).items():
        print(f"# mean {variant}: " + " ".join(f"{g}={v:.4f}" for g, v in by_group.items()))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    graph, task = _load_graph(args)
    rows = time_train_steps(graph, task, _training_config(args), args.classes, args.steps)
    print("classes_C,seconds_per_step,gnn_seeds_per_step,distinct_seeds")
    for row in rows:
        print(
            f"{int(row['classes_C'])},{row['seconds_per_step']:.4f},"
            f"{row['gnn_seeds_per_step']:.0f},{row['distinct_seeds']:.0f}"
        )
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "locality": cmd_locality,
    "train": cmd_train,
    "eval": cmd_eval,
    "recommend": cmd_recommend,
    "compare": cmd_compare,
    "bench": cmd_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command in {"train", "compare"}:
        ensure_model_dir()
    try:
        return COMMANDS[args.command](args)
    except (CtxGNNError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
