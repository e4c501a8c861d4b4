"""Command line entry point: ``hetegcn {prepare,train,eval,predict,sweep}``.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 training failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, load_config
from .corpus import CorpusError
from .evaluation import InductionError
from .formats import FormatError
from .model import ArchitectureError
from .sparse import SparseFormatError
from .trainer import TrainingError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3


def build_parser():
    parser = argparse.ArgumentParser(prog="hetegcn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--out", help="override output.directory")
        return p

    p = add("prepare", "build graphs and vocabulary from a corpus")
    p.add_argument("--mode", choices=("transductive", "inductive"))

    p = add("train", "train a model on prepared graphs")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to run")

    p = add("eval", "print micro/macro F1 of a trained model")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--checkpoint")

    p = add("predict", "write a predictions TSV")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--corpus", help="corpus TSV of documents to classify")
    p.add_argument("--inductive", action="store_true", help="use stored word embeddings")
    p.add_argument("--checkpoint")
    p.add_argument("--predictions", help="output path (default: <out>/predictions.tsv)")

    p = add("sweep", "train every configuration of the sweep grid")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--resume", action="store_true")
    return parser


def _run(args):
    cfg = load_config(args.config)
    if args.out:
        cfg.output["directory"] = str(Path(args.out).resolve())
    out = cfg.out_dir
    if args.command == "prepare":
        with pipeline.directory_lock(out):
            g = pipeline.prepare(cfg, mode=args.mode)
        print(f"prepared {g.n_docs} documents, {g.n_words} words ({g.mode}) in {pipeline.prepared_dir(cfg)}")
    elif args.command == "train":
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        pipeline.architecture(cfg)
        with pipeline.directory_lock(out):
            summary = pipeline.train_seeds(cfg, args.seeds)
        for seed, m in summary["runs"].items():
            parts = [f"seed={seed}", f"epochs={m['epochs']}"]
            for name in ("train", "val", "test"):
                if m[name] is not None:
                    parts.append(f"{name}_micro_f1={m[name]['micro_f1']:.4f}")
            print(" ".join(parts))
        if "test_micro_f1_mean" in summary:
            print(f"test micro_f1 mean={summary['test_micro_f1_mean']:.4f} "
                  f"std={summary['test_micro_f1_std']:.4f}")
    elif args.command == "eval":
        scores = pipeline.evaluate(cfg, args.split, args.checkpoint)
        print(f"split={args.split} micro_f1={scores['micro_f1']:.6f} macro_f1={scores['macro_f1']:.6f}")
    elif args.command == "predict":
        path = args.predictions or out / "predictions.tsv"
        preds = pipeline.predict(cfg, path, args.corpus, args.inductive, args.split, args.checkpoint)
        print(f"wrote {len(preds)} predictions to {path}")
    elif args.command == "sweep":
        if args.parallel < 1:
            raise ConfigError("--parallel must be >= 1")
        with pipeline.directory_lock(out):
            best, results = pipeline.run_sweep(cfg, args.parallel, args.resume)
        failed = sum(r.status != "ok" for r in results)
        print(f"{len(results)} configurations, {failed} failed")
        if best is not None:
            print("best: " + json.dumps(best.config.to_dict(), sort_keys=True)
                  + f" val_micro_f1={best.best_val:.4f}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, ArchitectureError, InductionError, pipeline.LockError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, FormatError, SparseFormatError, FileNotFoundError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
