"""Command-line interface: synth, stats, train, predict, evaluate, ablate."""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from .data import parse_letor, dataset_stats, write_letor
from .gbm import TrainConfig, load_model, save_model, train
from .loss import LossVariant
from .metrics import evaluate
from .synth import make_synthetic_splits

logger = logging.getLogger("softrankgbm")

ABLATION_VARIANTS = (
    ("GBRT", LossVariant.POINTWISE_MSE),
    ("GBRT+SoftRankMSE", LossVariant.POINTWISE_SOFTRANK_MSE),
    ("GBRT (Listwise)", LossVariant.LISTWISE_MSE),
    ("SoftRankGBM", LossVariant.LISTWISE_SOFTRANK_MSE),
)


class CliError(Exception):
    pass


@contextlib.contextmanager
def atomic_write(path: str | os.PathLike):
    """Open ``path`` for writing; it only appears once the block succeeds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _require_files(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise CliError(f"input file not found: {p}")


def _load(path, num_features=None, allow_interleaved=False):
    try:
        return parse_letor(path, num_features=num_features, allow_interleaved=allow_interleaved)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _load_pair(train_path, other_paths, allow_interleaved):
    """Parse the training file and companions with a shared feature dimension."""
    sets = [_load(p, allow_interleaved=allow_interleaved) for p in [train_path, *other_paths] if p]
    d = max(s.num_features for s in sets)
    sets = [s.with_num_features(d) for s in sets]
    out = iter(sets)
    first = next(out)
    return first, [next(out) if p else None for p in other_paths]


def _config_from_args(args, loss=None) -> TrainConfig:
    try:
        return TrainConfig(
            iterations=args.iterations,
            learning_rate=args.learning_rate,
            num_leaves=args.leaves,
            epsilon=args.epsilon,
            max_bins=args.max_bins,
            min_samples_per_leaf=args.min_samples_leaf,
            loss=loss or args.loss,
            eval_at=tuple(args.k or (1, 10)),
            eval_every=args.eval_every,
            seed=args.seed,
            threads=args.threads,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def cmd_synth(args) -> None:
    train_set, valid_set = make_synthetic_splits(
        args.queries, args.valid_queries, args.docs, args.features, args.noise, args.seed
    )
    out = Path(args.out)
    with atomic_write(out / "train.txt") as fh:
        write_letor(train_set, fh)
    with atomic_write(out / "valid.txt") as fh:
        write_letor(valid_set, fh)
    print(f"wrote {out / 'train.txt'} ({train_set.num_queries} queries) and "
          f"{out / 'valid.txt'} ({valid_set.num_queries} queries)")


def cmd_stats(args) -> None:
    _require_files(*args.files)
    for path in args.files:
        stats = dataset_stats(_load(path, allow_interleaved=args.allow_interleaved))
        stats["label_histogram"] = {repr(k): v for k, v in stats["label_histogram"].items()}
        print(json.dumps({"file": path, **stats}))


def cmd_train(args) -> None:
    _require_files(args.train, args.valid, args.test)
    config = _config_from_args(args)
    train_set, (valid_set, test_set) = _load_pair(args.train, [args.valid, args.test], args.allow_interleaved)
    curve_path = args.out or f"{args.model}.curve.tsv"

    start = time.perf_counter()
    ensemble, curve = train(train_set, config, valid_set)
    elapsed = time.perf_counter() - start
    logger.info("trained %d trees in %.2fs", len(ensemble.trees), elapsed)

    with atomic_write(args.model) as fh:
        save_model(ensemble, fh)
    with atomic_write(curve_path) as fh:
        curve.write(fh)

    print(f"model: {args.model}  curve: {curve_path}  ({len(ensemble.trees)} trees, {elapsed:.2f}s)")
    print(f"final train loss: {curve.train_loss[-1]:.6g}")
    for name, ds in (("valid", valid_set), ("test", test_set)):
        if ds is not None:
            report = evaluate(ds, ensemble.predict(ds.features), config.eval_at)
            print(f"{name}: {report.format()}")


def cmd_predict(args) -> None:
    _require_files(args.model, args.test)
    try:
        ensemble = load_model(args.model)
    except ValueError as exc:
        raise CliError(f"{args.model}: {exc}") from exc
    data = _load(args.test, allow_interleaved=args.allow_interleaved)
    if data.num_features > ensemble.num_features:
        raise CliError(
            f"feature dimension mismatch: model expects {ensemble.num_features}, "
            f"{args.test} has {data.num_features}"
        )
    data = data.with_num_features(ensemble.num_features)
    scores = np.empty(data.num_docs)
    scores[data.source_rows] = ensemble.predict(data.features)
    with atomic_write(args.out) as fh:
        for s in scores:
            fh.write(f"{s:.17g}\n")


def _read_scores(path) -> np.ndarray:
    try:
        return np.loadtxt(path, dtype=np.float64, ndmin=1)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc


def cmd_evaluate(args) -> None:
    _require_files(args.test, args.scores)
    data = _load(args.test, allow_interleaved=args.allow_interleaved)
    scores = _read_scores(args.scores)
    if len(scores) != data.num_docs:
        raise CliError(f"{args.scores} has {len(scores)} scores but {args.test} has {data.num_docs} documents")
    report = evaluate(data, scores, tuple(args.k or (1, 10)))
    if args.out:
        with atomic_write(args.out) as fh:
            report.write_table(fh)
    else:
        report.write_table(sys.stdout)
    if args.per_query:
        with atomic_write(args.per_query) as fh:
            report.write_per_query(fh)


def run_ablation(train_set, eval_set, base: TrainConfig) -> list[tuple[str, dict]]:
    rows = []
    for name, variant in ABLATION_VARIANTS:
        config = TrainConfig(**{**base.to_dict(), "loss": variant.value})
        ensemble, _ = train(train_set, config)
        report = evaluate(eval_set, ensemble.predict(eval_set.features), config.eval_at)
        rows.append((name, report.means))
        logger.info("%s: %s", name, report.format())
    return rows


def write_ablation_table(rows, ks, fh) -> None:
    keys = [(m, k) for m in ("ndcg", "map") for k in ks]
    fh.write("variant\t" + "\t".join(f"{m}@{k}" for m, k in keys) + "\n")
    for name, means in rows:
        fh.write(name + "\t" + "\t".join(f"{means[key]:.4f}" for key in keys) + "\n")


def cmd_ablate(args) -> None:
    eval_path = args.valid or args.test
    if eval_path is None:
        raise CliError("ablate needs --valid or --test to score the variants")
    _require_files(args.train, eval_path)
    base = _config_from_args(args)
    train_set, (eval_set,) = _load_pair(args.train, [eval_path], args.allow_interleaved)
    rows = run_ablation(train_set, eval_set, base)
    if args.out:
        with atomic_write(args.out) as fh:
            write_ablation_table(rows, base.eval_at, fh)
    write_ablation_table(rows, base.eval_at, sys.stdout)


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    p.add_argument("--train", required=True, help="LETOR training file")
    p.add_argument("--valid", help="LETOR validation file")
    p.add_argument("--test", help="LETOR test file")
    p.add_argument("--loss", default=defaults.loss, choices=[v.value for v in LossVariant])
    p.add_argument("--iterations", type=int, default=defaults.iterations)
    p.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    p.add_argument("--epsilon", type=float, default=defaults.epsilon)
    p.add_argument("--leaves", type=int, default=defaults.num_leaves)
    p.add_argument("--max-bins", type=int, default=defaults.max_bins)
    p.add_argument("--min-samples-leaf", type=int, default=defaults.min_samples_per_leaf)
    p.add_argument("--eval-every", type=int, default=defaults.eval_every)
    p.add_argument("--threads", type=int, default=defaults.threads)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--k", type=int, action="append", help="truncation level (repeatable; default 1 and 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softrankgbm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--allow-interleaved", action="store_true",
                        help="regroup LETOR files whose query lines are not contiguous")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a ranking model")
    _add_training_flags(p)
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--out", help="learning-curve file (default: <model>.curve.tsv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a LETOR file with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="score file, one score per input line")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="NDCG@k / MAP@k of a score file")
    p.add_argument("--test", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--k", type=int, action="append")
    p.add_argument("--out", help="report file (default: stdout)")
    p.add_argument("--per-query", help="optional per-query dump")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train the four loss variants and tabulate")
    _add_training_flags(p)
    p.add_argument("--out", help="table file (also printed)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write a synthetic train/valid LETOR pair")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--valid-queries", type=int, default=30)
    p.add_argument("--docs", type=int, default=20)
    p.add_argument("--features", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"softrankgbm {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
