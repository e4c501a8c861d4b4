"""End-to-end workflows behind the command line: prepare, train, eval, predict, sweep."""

from __future__ import annotations

import concurrent.futures
import logging
import os
import shutil
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import formats
from . import model as M
from .baselines import textgcn_adjacency
from .corpus import load_corpus, load_split, load_stopwords, preprocess, save_split, write_corpus
from .evaluation import (
    FeatureEmbeddings, InductionError, export_feature_embeddings, predict_inductive,
    predict_transductive, stored_layer_tag,
)
from .graphs import build_graphs, load_graphs, save_graphs
from .metrics import argmax_lowest, macro_f1, micro_f1
from .trainer import SweepResult, TrainTask, enumerate_grid, run_config, select_best, train

logger = logging.getLogger(__name__)


class LockError(RuntimeError):
    pass


@contextmanager
def directory_lock(directory):
    """Exclusive lock file guarding an output directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / ".lock"
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockError(f"{directory} is locked by another process (remove {path} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        path.unlink(missing_ok=True)


# --- checkpoints ----------------------------------------------------------

def save_checkpoint(directory, a, params, n, m, k, normalization, seed, label_names, input_dims=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, W in enumerate(params.weights):
        formats.write_dense(W, d / f"layer_{i}.bin")
    formats.write_json({
        "architecture": a.name,
        "input_mode": a.input_mode,
        "hidden_dim": a.hidden_dim,
        "simplified": a.simplified,
        "combine": a.combine,
        "dims": {"n": n, "m": m, "k": k, "inputs": input_dims or {}},
        "normalization": normalization,
        "seed": seed,
        "n_layers": len(params.weights),
        "label_names": list(label_names),
    }, d / "manifest.json")


def load_checkpoint(directory):
    d = Path(directory)
    if not (d / "manifest.json").exists():
        raise FileNotFoundError(f"no checkpoint at {d}")
    man = formats.read_json(d / "manifest.json")
    a = M.parse_architecture(man["architecture"], man["input_mode"], man["hidden_dim"],
                             man["simplified"], man["combine"])
    weights = [formats.read_dense(d / f"layer_{i}.bin") for i in range(man["n_layers"])]
    return a, M.ModelParams(weights, man["seed"]), man


# --- shared setup ---------------------------------------------------------

def prepared_dir(cfg):
    return cfg.out_dir / "prepared"


def architecture(cfg):
    mc = cfg.model
    return M.parse_architecture(mc["architecture"], mc["input_mode"], mc["dim"], mc["simplified"], mc["combine"])


def model_graphs(a, g, normalization):
    adjacency = textgcn_adjacency(g) if any(l.graph_token == "A" for l in a.all_layers) else None
    return M.ModelGraphs(g, normalization, adjacency=adjacency)


def build_task(a, g, c, split, mg):
    """Graph rows and labels for each split part present in the graph."""
    offset = M.output_doc_rows(a, mg)
    present = set(g.doc_ids)

    def part(ids):
        ids = [d for d in ids if d in present]
        rows = g.doc_rows(ids)
        return rows + offset, c.labels[c.indices(ids)] if ids else np.zeros(0, np.int64)

    tr, ytr = part(split.train)
    va, yva = part(split.val)
    te, yte = part(split.test)
    if tr.size == 0:
        raise ValueError("split has no training documents in the graph")
    return TrainTask(tr, ytr, va, yva, te, yte)


def load_prepared(cfg):
    d = prepared_dir(cfg)
    if not (d / "graphs.json").exists():
        raise FileNotFoundError(f"no prepared graphs in {d}; run 'prepare' first")
    g = load_graphs(d)
    c = load_corpus(d / "corpus.tsv")
    split = load_split(d / "split.json")
    return c, split, g


# --- commands -------------------------------------------------------------

def prepare(cfg, mode=None, out=None):
    dc, gc = cfg.data, dict(cfg.graphs)
    if mode is not None:
        gc["mode"] = mode
    c = load_corpus(dc["corpus"])
    stop = load_stopwords(dc["stopwords"]) if dc.get("stopwords") else set()
    c = preprocess(c, stop, dc["min_count"], dc["skip_filtering"])
    split = load_split(dc["splits"])
    kept = set(c.doc_ids)
    split = type(split)(
        tuple(d for d in split.train if d in kept), tuple(d for d in split.val if d in kept),
        tuple(d for d in split.test if d in kept), split.label_fraction, split.repeat_index,
    ).check_against(c)
    g = build_graphs(c, split, gc["window"], gc["knn"], gc["mode"], gc["build_knn"])
    d = Path(out) / "prepared" if out else prepared_dir(cfg)
    d.mkdir(parents=True, exist_ok=True)
    save_graphs(g, d, {"min_count": dc["min_count"], "skip_filtering": dc["skip_filtering"],
                       "n_dropped_docs": len(c.dropped)})
    write_corpus(c, d / "corpus.tsv")
    save_split(split, d / "split.json")
    effective = cfg.to_dict()
    effective["graphs"] = gc
    formats.write_json(effective, d / "manifest.json")
    return g


def _scores(probs, rows, y, k):
    if rows is None or len(rows) == 0:
        return None
    pred = argmax_lowest(probs[rows])
    return {"micro_f1": micro_f1(y, pred), "macro_f1": macro_f1(y, pred, k)}


def _inductive_scores(fe, W, c, ids, k):
    if not ids:
        return None
    sub = c.subset(ids)
    preds = predict_inductive(fe, W, sub)
    pred = np.array([p.label for p in preds])
    return {"micro_f1": micro_f1(sub.labels, pred), "macro_f1": macro_f1(sub.labels, pred, k)}


def train_one(cfg, seed, run_dir, prepared=None):
    """Train a single seed and write checkpoint, report, metrics and embeddings."""
    c, split, g = prepared or load_prepared(cfg)
    a = architecture(cfg)
    tc = cfg.train_config(seed=seed)
    mg = model_graphs(a, g, tc.normalization)
    task = build_task(a, g, c, split, mg)
    params, report = train(a, mg, task, tc, c.n_classes)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(run_dir / "checkpoint", a, params, mg.n, mg.m, c.n_classes,
                    tc.normalization, seed, c.label_names, mg.input_dims())
    (run_dir / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
    probs = M.forward(a, params, mg).probs
    metrics = {
        "best_epoch": report.best_epoch,
        "epochs": report.n_epochs,
        "train": _scores(probs, task.train_rows, task.train_y, c.n_classes),
        "val": _scores(probs, task.val_rows, task.val_y, c.n_classes),
        "test": _scores(probs, task.test_rows, task.test_y, c.n_classes),
    }
    try:
        fe = export_feature_embeddings(a, params, mg)
    except InductionError:
        fe = None
    if fe is not None:
        fe.save(run_dir / "embeddings")
        if metrics["test"] is None:
            metrics["test"] = _inductive_scores(fe, params.weights[-1], c, list(split.test), c.n_classes)
    formats.write_json(metrics, run_dir / "metrics.json")
    return metrics


def run_dir_for(cfg, seed):
    return cfg.out_dir / "runs" / f"seed_{seed}"


def train_seeds(cfg, n_seeds=1):
    prepared = load_prepared(cfg)
    base = cfg.train_config().seed
    per_seed = {}
    for s in range(base, base + n_seeds):
        per_seed[s] = train_one(cfg, s, run_dir_for(cfg, s), prepared)
    summary = {"seeds": list(per_seed), "runs": {str(s): m for s, m in per_seed.items()}}
    tests = [m["test"] for m in per_seed.values() if m["test"] is not None]
    if tests:
        for key in ("micro_f1", "macro_f1"):
            vals = np.array([t[key] for t in tests])
            summary[f"test_{key}_mean"] = float(vals.mean())
            summary[f"test_{key}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    formats.write_json(summary, cfg.out_dir / "runs" / "summary.json")
    return summary


def _checkpoint_path(cfg, checkpoint=None):
    return Path(checkpoint) if checkpoint else run_dir_for(cfg, cfg.train_config().seed) / "checkpoint"


def evaluate(cfg, split_name="test", checkpoint=None):
    """Micro/macro F1 of a trained checkpoint on one split part."""
    c, split, g = load_prepared(cfg)
    ck = _checkpoint_path(cfg, checkpoint)
    a, params, man = load_checkpoint(ck)
    ids = list(getattr(split, split_name))
    if not ids:
        raise ValueError(f"split part {split_name!r} is empty")
    in_graph = set(g.doc_ids)
    if all(d in in_graph for d in ids):
        mg = model_graphs(a, g, man["normalization"])
        preds = predict_transductive(a, params, mg, ids, g.doc_ids)
    else:
        fe = FeatureEmbeddings.load(ck.parent / "embeddings")
        preds = predict_inductive(fe, params.weights[-1], c.subset(ids))
    truth = c.labels[c.indices(ids)]
    pred = np.array([p.label for p in preds])
    return {"micro_f1": micro_f1(truth, pred), "macro_f1": macro_f1(truth, pred, c.n_classes)}


def predict(cfg, out_path, corpus_path=None, inductive=False, split_name="test", checkpoint=None):
    """Write a predictions TSV and return the predictions."""
    c, split, g = load_prepared(cfg)
    ck = _checkpoint_path(cfg, checkpoint)
    a, params, man = load_checkpoint(ck)
    label_names = man["label_names"]
    if inductive:
        emb_dir = ck.parent / "embeddings"
        if not (emb_dir / "embeddings.tsv").exists():
            stored_layer_tag(a)
            raise FileNotFoundError(f"no stored embeddings in {emb_dir}")
        fe = FeatureEmbeddings.load(emb_dir)
        docs = load_corpus(corpus_path) if corpus_path else c.subset(list(getattr(split, split_name)))
        preds = predict_inductive(fe, params.weights[-1], docs)
    else:
        ids = list(load_corpus(corpus_path).doc_ids) if corpus_path else list(getattr(split, split_name))
        mg = model_graphs(a, g, man["normalization"])
        preds = predict_transductive(a, params, mg, ids, g.doc_ids)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    formats.write_predictions(preds, label_names, out_path)
    return preds


# --- sweeps ---------------------------------------------------------------

def _read_results(path):
    if not path.exists():
        return {}
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        return {}
    header = lines[0].split("\t")
    out = {}
    for ln in lines[1:]:
        row = dict(zip(header, ln.split("\t")))
        out[row["config_hash"]] = row
    return out


def _result_from_row(cfg, row):
    return SweepResult(
        cfg, row["status"], float(row["best_val_micro_f1"]), float(row["test_micro_f1"]),
        float(row["test_macro_f1"]), int(row["epochs"]), float(row["seconds_per_epoch"]),
    )


class _SweepJob:
    """Picklable per-configuration worker for process pools."""

    def __init__(self, a, g, c, split):
        self.a, self.g, self.c, self.split = a, g, c, split
        self._graphs = {}

    def graph_for(self, normalization):
        if normalization not in self._graphs:
            self._graphs[normalization] = model_graphs(self.a, self.g, normalization)
        return self._graphs[normalization]

    def __call__(self, tc):
        mg = self.graph_for(tc.normalization)
        task = build_task(self.a, self.g, self.c, self.split, mg)
        return run_config(self.a, self.graph_for, task, tc, self.c.n_classes)


def run_sweep(cfg, parallel=1, resume=False):
    """Train every grid configuration, write ``sweep/results.tsv`` and the best run."""
    c, split, g = load_prepared(cfg)
    a = architecture(cfg)
    grid = cfg.sweep.get("grid") or {}
    configs = enumerate_grid(grid, cfg.train_config())
    sweep_dir = cfg.out_dir / "sweep"
    sweep_dir.mkdir(parents=True, exist_ok=True)
    results_path = sweep_dir / "results.tsv"
    partial_path = sweep_dir / "results.partial.tsv"
    done = {}
    if resume:
        done.update(_read_results(results_path))
        done.update(_read_results(partial_path))
    elif partial_path.exists():
        partial_path.unlink()
    job = _SweepJob(a, g, c, split)
    header = "\t".join(SweepResult.COLUMNS) + "\n"
    if not partial_path.exists():
        partial_path.write_text(header, encoding="utf-8")

    def record(res):
        with open(partial_path, "a", encoding="utf-8") as fh:
            fh.write("\t".join(res.row()) + "\n")
        if res.status == "ok":
            rd = sweep_dir / "runs" / res.config.digest()
            save_checkpoint(rd / "checkpoint", a, res.params, g.n_docs, g.n_words, c.n_classes,
                            res.config.normalization, res.config.seed, c.label_names)
            (rd / "report.tsv").write_text(res.report.to_tsv(), encoding="utf-8")

    todo = [tc for tc in configs if tc.digest() not in done]
    fresh = {}
    if parallel > 1 and len(todo) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = {pool.submit(job, tc): tc for tc in todo}
            for fut in concurrent.futures.as_completed(futures):
                res = fut.result()
                record(res)
                fresh[res.config.digest()] = res
    else:
        for tc in todo:
            res = job(tc)
            record(res)
            fresh[tc.digest()] = res

    results = []
    for tc in configs:
        h = tc.digest()
        results.append(fresh[h] if h in fresh else _result_from_row(tc, done[h]))
    lines = [header] + ["\t".join(r.row()) + "\n" for r in results]
    results_path.write_text("".join(lines), encoding="utf-8")
    partial_path.unlink(missing_ok=True)

    best = select_best(results)
    if best is not None:
        src = sweep_dir / "runs" / best.config.digest()
        dst = sweep_dir / "best"
        if dst.exists():
            shutil.rmtree(dst)
        shutil.copytree(src, dst)
        formats.write_json({"config_hash": best.config.digest(), "config": best.config.to_dict(),
                            "best_val_micro_f1": best.best_val}, dst / "selection.json")
    return best, results
