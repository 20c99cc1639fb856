"""Command-line entry point: ``combigcn {preprocess,train,evaluate,recommend}``.

Exit codes: 0 success, 1 runtime error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from .baselines import VARIANTS, build_variant
from .evaluate import evaluate
from .graph import WeightConfig, build_interaction_matrix, build_weighted_user_matrix, write_edge_list
from .model import load_checkpoint, propagate, rank_items, save_checkpoint, score_users
from .preprocess import (
    InputError,
    InteractionDataset,
    PreprocessConfig,
    align,
    ingest,
    read_tsv,
    reduce,
    split,
    write_stats,
    write_tsv,
)
from .trainer import TrainConfig, train

_TRAIN_DEFAULTS = TrainConfig()
_WEIGHT_DEFAULTS = WeightConfig()

# flag dest -> built-in default; flags left unset fall back to the config file, then to these
DEFAULTS = {
    "variant": "combigcn",
    "layers": _TRAIN_DEFAULTS.layers,
    "dim": _TRAIN_DEFAULTS.dim,
    "lr": _TRAIN_DEFAULTS.learning_rate,
    "l2": _TRAIN_DEFAULTS.l2_lambda,
    "batch": _TRAIN_DEFAULTS.batch_size,
    "k": _TRAIN_DEFAULTS.eval_k,
    "patience": _TRAIN_DEFAULTS.patience_epochs,
    "max_epochs": _TRAIN_DEFAULTS.max_epochs,
    "seed": _TRAIN_DEFAULTS.seed,
    "bins": _WEIGHT_DEFAULTS.quantization_bins,
    "self_loops": not _WEIGHT_DEFAULTS.drop_self_loops,
    "validation_fraction": 0.0,
    "core_items": None,
    "ratio": None,
    "min_interactions": 10,
    "train_fraction": 0.8,
    "no_reduce": False,
}


@dataclass(frozen=True)
class RunConfig:
    """Effective settings of a training run, echoed into every artifact."""

    variant: str
    train: TrainConfig
    weights: WeightConfig
    validation_fraction: float = 0.0

    def as_dict(self) -> dict:
        return {
            "variant": self.variant,
            "train": self.train.as_dict(),
            "weights": asdict(self.weights),
            "validation_fraction": self.validation_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        return cls(
            variant=d["variant"],
            train=TrainConfig(**d["train"]),
            weights=WeightConfig(**d["weights"]),
            validation_fraction=d.get("validation_fraction", 0.0),
        )


def _resolve(args: argparse.Namespace) -> dict:
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config file {args.config}: {exc}") from exc
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else file_cfg.get(key, default)
    return out


def _run_config(opts: dict) -> RunConfig:
    try:
        return RunConfig(
            variant=opts["variant"],
            train=TrainConfig(
                learning_rate=opts["lr"],
                l2_lambda=opts["l2"],
                layers=opts["layers"],
                dim=opts["dim"],
                batch_size=opts["batch"],
                eval_k=opts["k"],
                patience_epochs=opts["patience"],
                max_epochs=opts["max_epochs"],
                seed=opts["seed"],
            ),
            weights=WeightConfig(quantization_bins=opts["bins"], drop_self_loops=not opts["self_loops"]),
            validation_fraction=opts["validation_fraction"],
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _load(path) -> InteractionDataset:
    if not Path(path).exists():
        raise InputError(f"no such file: {path}")
    return ingest(read_tsv(path))


def _load_aligned(train_ds: InteractionDataset, path) -> InteractionDataset:
    if not Path(path).exists():
        raise InputError(f"no such file: {path}")
    ds, dropped = align(train_ds, read_tsv(path))
    if dropped:
        print(f"warning: dropped {dropped} test interactions with unseen users or items", file=sys.stderr)
    return ds


def _fit_split(train_ds: InteractionDataset, run: RunConfig):
    """Interactions used for the graph and gradients, plus the early-stop set."""
    if run.validation_fraction > 0:
        return split(train_ds, 1.0 - run.validation_fraction, run.train.seed)
    return train_ds, None


# -- subcommands -------------------------------------------------------------


def cmd_preprocess(args: argparse.Namespace) -> int:
    opts = _resolve(args)
    ds = _load(args.input)
    if not opts["no_reduce"]:
        core = opts["core_items"] if opts["core_items"] is not None else ds.n_items
        ratio = opts["ratio"] if opts["ratio"] is not None else ds.n_users / core
        try:
            cfg = PreprocessConfig(core, ratio, opts["min_interactions"])
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        if core > ds.n_items:
            raise InputError(f"--core-items {core} exceeds the {ds.n_items} items in the input")
        ds = reduce(ds, cfg)
        settings = {"core_items": cfg.core_item_count, "ratio": cfg.user_item_ratio,
                    "min_interactions": cfg.min_user_interactions}
    else:
        settings = {"reduced": False}
    train_ds, test_ds = split(ds, opts["train_fraction"], opts["seed"])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tsv(ds, out / "reduced.tsv")
    write_tsv(train_ds, out / "train.tsv")
    write_tsv(test_ds, out / "test.tsv")
    write_stats(ds, out / "stats.json", {
        "seed": opts["seed"],
        "train_fraction": opts["train_fraction"],
        "train_interactions": train_ds.n_interactions,
        "test_interactions": test_ds.n_interactions,
        **settings,
    })
    print(json.dumps(ds.stats(), sort_keys=True))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    run = _run_config(_resolve(args))
    train_ds = _load(args.train)
    test_ds = _load_aligned(train_ds, args.test)
    fit_ds, val_ds = _fit_split(train_ds, run)
    graphs, cfg = build_variant(run.variant, fit_ds, run.train, run.weights)
    run = RunConfig(run.variant, cfg, run.weights, run.validation_fraction)

    t = run.train
    print(
        f"config variant={run.variant} lr={t.learning_rate} l2={t.l2_lambda} layers={t.layers} "
        f"dim={t.dim} batch={t.batch_size} k={t.eval_k} patience={t.patience_epochs} "
        f"max_epochs={t.max_epochs} bins={run.weights.quantization_bins} "
        f"self_loops={not run.weights.drop_self_loops} seed={t.seed}",
        flush=True,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.export_w and run.variant == "combigcn":
        w = build_weighted_user_matrix(build_interaction_matrix(fit_ds), run.weights)
        write_edge_list(w, fit_ds.user_keys, out / "user_graph.tsv")

    if val_ds is None:
        held_out = test_ds
        evaluator = None
    else:
        held_out = val_ds

        def evaluator(e_star):
            return evaluate(e_star, fit_ds, val_ds, t.eval_k)

    phi, history = train(fit_ds, held_out, graphs, t, evaluator=evaluator,
                         progress=lambda line: print(line, flush=True))

    meta = run.as_dict()
    meta["best_epoch"] = history.best_epoch
    save_checkpoint(phi, out / "checkpoint.bin", meta)
    with open(out / "history.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# variant={run.variant}\n")
        fh.write(f"# seed={t.seed}\n")
        fh.write(f"# config={json.dumps(run.as_dict(), sort_keys=True)}\n")
        fh.write(f"# best_epoch={history.best_epoch} stopped_early={history.stopped_early}\n")
        writer = csv.writer(fh, lineterminator="\n")
        k = t.eval_k
        writer.writerow(["epoch", "loss", f"recall@{k}", f"precision@{k}", f"ndcg@{k}"])
        for r in history.records:
            writer.writerow([r.epoch, *(repr(float(v)) for v in (r.loss, r.recall, r.precision, r.ndcg))])
    return 0


def _restore(args: argparse.Namespace):
    phi, meta = load_checkpoint(args.checkpoint)
    train_ds = _load(args.train)
    if (phi.n_users, phi.n_items) != (train_ds.n_users, train_ds.n_items):
        raise InputError(
            f"checkpoint (n, m, d) = ({phi.n_users}, {phi.n_items}, {phi.dim}) does not match "
            f"dataset (n, m, d) = ({train_ds.n_users}, {train_ds.n_items}, {phi.dim})"
        )
    if meta:
        run = RunConfig.from_dict(meta)
    else:
        run = _run_config(_resolve(args))
    fit_ds, _ = _fit_split(train_ds, run)
    graphs, cfg = build_variant(run.variant, fit_ds, run.train, run.weights)
    e_star = propagate(phi, graphs, cfg.layers).final
    return train_ds, e_star


def cmd_evaluate(args: argparse.Namespace) -> int:
    train_ds, e_star = _restore(args)
    test_ds = _load_aligned(train_ds, args.test)
    k = _resolve(args)["k"]
    print(evaluate(e_star, train_ds, test_ds, k).to_json())
    return 0


def cmd_recommend(args: argparse.Namespace) -> int:
    train_ds, e_star = _restore(args)
    if not train_ds.has_user(args.user):
        raise InputError(f"unknown user {args.user!r}")
    u = train_ds.user_id(args.user)
    k = _resolve(args)["k"]
    scores = score_users(e_star, [u], train_ds.n_users)[0]
    for rank, item in enumerate(rank_items(scores, k, exclude=train_ds.items_by_user()[u]), start=1):
        print(f"{rank}\t{train_ds.item_keys[item]}\t{float(scores[item])!r}")
    return 0


# -- argument parsing ----------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--layers", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--self-loops", action="store_const", const=True,
                   help="keep the diagonal of the user-user graph")
    p.add_argument("--seed", type=int)
    p.add_argument("--validation-fraction", type=float,
                   help="hold out this share of training interactions for early stopping")
    p.add_argument("--config", help="JSON file of defaults; explicit flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="combigcn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="reduce a raw interaction log and split it 80/20")
    p.add_argument("input")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--core-items", type=int, help="number of popular items to keep (default: all)")
    p.add_argument("--ratio", type=float, help="target users per core item (default: keep all users)")
    p.add_argument("--min-interactions", type=int)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--no-reduce", action="store_const", const=True, help="only split, skip reduction")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model and write checkpoint + history")
    p.add_argument("train")
    p.add_argument("test")
    p.add_argument("--out", required=True, help="output directory")
    _add_model_flags(p)
    p.add_argument("--lr", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--export-w", action="store_true", help="write the user-user graph as a TSV edge list")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="print top-K metrics of a checkpoint as JSON")
    p.add_argument("checkpoint")
    p.add_argument("train")
    p.add_argument("test")
    p.add_argument("--k", type=int)
    _add_model_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("recommend", help="print the top-K unseen items for one user")
    p.add_argument("checkpoint")
    p.add_argument("train")
    p.add_argument("user")
    p.add_argument("--k", type=int)
    _add_model_flags(p)
    p.set_defaults(func=cmd_recommend)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get("COMBIGCN_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=int(threads)):
                return args.func(args)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
