"""Word/document relation graphs built from a corpus.

* ``X`` -- document-word TF-IDF weights (raw counts times natural-log idf)
* ``F`` -- word-word positive PMI from sliding-window co-occurrence
* ``N`` -- document-document cosine k-nearest-neighbour graph over ``X`` rows
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import formats
from .sparse import csr_from_coo, from_scipy, transpose

logger = logging.getLogger(__name__)

MODES = ("transductive", "inductive")


@dataclass(frozen=True)
class GraphSet:
    """The three relation graphs plus what is needed to rebuild ``X`` rows.

    ``vocab`` lists the column tokens of ``X``/``F``; ``doc_ids`` lists the
    rows of ``X``/``N``.
    """

    X: object
    F: object
    N: object
    idf: np.ndarray
    vocab: tuple
    doc_ids: tuple
    mode: str = "transductive"
    window: int = 20
    knn: int = 25

    @property
    def n_docs(self):
        return self.X.n_rows

    @property
    def n_words(self):
        return self.X.n_cols

    def doc_rows(self, doc_ids):
        index = {d: i for i, d in enumerate(self.doc_ids)}
        try:
            return np.array([index[d] for d in doc_ids], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"document {exc.args[0]!r} is not part of the graph") from None


def _scope(c, doc_scope):
    if doc_scope is None:
        return np.arange(c.n_docs)
    return c.indices(doc_scope)


def _column_map(c, columns):
    """Corpus word id -> graph column (or -1)."""
    if columns is None:
        return np.arange(c.n_words)
    cmap = np.full(c.n_words, -1, dtype=np.int64)
    cmap[np.asarray(columns, dtype=np.int64)] = np.arange(len(columns))
    return cmap


def _count_matrix(c, doc_idx, cmap, n_cols):
    """Raw term counts as a scipy CSR (rows follow ``doc_idx``)."""
    rows, cols = [], []
    for r, i in enumerate(doc_idx):
        mapped = cmap[c.docs[i]]
        mapped = mapped[mapped >= 0]
        rows.append(np.full(mapped.size, r, dtype=np.int64))
        cols.append(mapped)
    rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    M = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(len(doc_idx), n_cols)).tocsr()
    M.sum_duplicates()
    return M


def compute_idf(c, idf_scope=None, columns=None):
    """``ln(|scope| / df)`` per column; 0 for words absent from the scope."""
    cmap = _column_map(c, columns)
    n_cols = int((cmap >= 0).sum())
    idx = _scope(c, idf_scope)
    counts = _count_matrix(c, idx, cmap, n_cols)
    df = np.bincount(counts.indices, minlength=n_cols).astype(np.float64)
    idf = np.zeros(n_cols)
    seen = df > 0
    idf[seen] = np.log(len(idx) / df[seen])
    return idf


def tfidf_rows(c, doc_idx, idf, columns=None):
    cmap = _column_map(c, columns)
    counts = _count_matrix(c, doc_idx, cmap, idf.shape[0])
    # tf > 0 with idf == 0 covers both every-document words and words unseen in the idf scope
    counts = counts.multiply(idf[None, :]).tocsr()
    return from_scipy(counts)


def build_tfidf(c, doc_scope=None, idf_scope=None, columns=None):
    """TF-IDF graph over ``doc_scope`` rows with idf estimated on ``idf_scope``.

    ``columns`` optionally restricts (and orders) the corpus word ids kept.
    Returns ``(X, idf)``.
    """
    idf = compute_idf(c, idf_scope, columns)
    X = tfidf_rows(c, _scope(c, doc_scope), idf, columns)
    return X, idf


def _window_incidence(doc_tokens, window):
    """Binary window x word incidence triplets for one token array."""
    if doc_tokens.size <= window:
        return np.zeros(doc_tokens.size, np.int64), doc_tokens, 1
    views = np.lib.stride_tricks.sliding_window_view(doc_tokens, window)
    n_win = views.shape[0]
    return np.repeat(np.arange(n_win), window), views.ravel(), n_win


def window_counts(c, doc_scope=None, window=20, columns=None, chunk=2_000_000):
    """Return ``(C, total)`` where ``C[i, j]`` counts windows containing both words.

    The diagonal of ``C`` holds the per-word window counts.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    cmap = _column_map(c, columns)
    m = int((cmap >= 0).sum())
    total = 0
    C = sp.csr_matrix((m, m), dtype=np.float64)
    rows, cols, offset = [], [], 0

    def flush():
        nonlocal C, rows, cols, offset
        if not rows:
            return
        r, k = np.concatenate(rows), np.concatenate(cols)
        B = sp.coo_matrix((np.ones(r.size), (r, k)), shape=(offset, m)).tocsr()
        B.sum_duplicates()
        B.data[:] = 1.0
        C = C + (B.T @ B).tocsr()
        rows, cols, offset = [], [], 0

    pending = 0
    for i in _scope(c, doc_scope):
        toks = cmap[c.docs[i]]
        toks = toks[toks >= 0]
        if toks.size == 0:
            continue
        r, k, n_win = _window_incidence(toks, window)
        rows.append(r + offset)
        cols.append(k)
        offset += n_win
        total += n_win
        pending += r.size
        if pending >= chunk:
            flush()
            pending = 0
    flush()
    return C.tocsr(), total


def build_pmi(c, doc_scope=None, window=20, columns=None):
    """Positive PMI word graph with unit diagonal."""
    C, total = window_counts(c, doc_scope, window, columns)
    m = C.shape[0]
    single = C.diagonal()
    coo = C.tocoo()
    off = coo.row != coo.col
    r, k, both = coo.row[off], coo.col[off], coo.data[off]
    pmi = np.log((both * float(total)) / (single[r] * single[k]))
    pos = pmi > 0
    diag = np.arange(m)
    rows = np.concatenate([r[pos], diag])
    cols = np.concatenate([k[pos], diag])
    vals = np.concatenate([pmi[pos], np.ones(m)])
    return csr_from_coo((rows, cols, vals), m, m)


def build_knn(X, knn=25, block=512):
    """Symmetric cosine kNN graph over the rows of ``X``.

    Each row keeps its ``knn`` most similar other rows (ties to the lower
    index, zero similarities dropped); the union is symmetrized with ``max``
    and the diagonal set to 1.
    """
    if knn < 1:
        raise ValueError("knn must be >= 1")
    n = X.n_rows
    if n < 2:
        raise ValueError("kNN graph needs at least two rows")
    M = X.to_scipy()
    norms = np.sqrt(np.asarray(M.multiply(M).sum(axis=1)).ravel())
    inv = np.zeros_like(norms)
    inv[norms > 0] = 1.0 / norms[norms > 0]
    Xn = sp.diags(inv) @ M
    XnT = Xn.T.tocsc()
    k = min(knn, n - 1)
    rows, cols, vals = [], [], []
    for start in range(0, n, block):
        stop = min(n, start + block)
        sim = np.asarray((Xn[start:stop] @ XnT).todense())
        sim[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        order = np.argsort(-sim, axis=1, kind="stable")[:, :k]
        top = np.take_along_axis(sim, order, axis=1)
        keep = top > 0
        rows.append(np.repeat(np.arange(start, stop), k)[keep.ravel()])
        cols.append(order[keep])
        vals.append(top[keep])
    D = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    S = D.maximum(D.T).tolil()
    S.setdiag(1.0)
    return from_scipy(S.tocsr())


def build_graphs(c, split=None, window=20, knn=25, mode="transductive", with_knn=True):
    """Build ``X``, ``F`` and (optionally) ``N`` for a corpus and split.

    Transductive graphs cover every document and estimate idf/PMI on all of
    them.  Inductive graphs estimate idf/PMI on the training documents only,
    keep only words seen in training, and contain rows for the training and
    validation documents; test documents go through inductive prediction.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "transductive":
        rows = np.arange(c.n_docs)
        scope = None
        columns = None
    else:
        if split is None:
            raise ValueError("inductive graphs need a split")
        train_idx = c.indices(split.train)
        members = set(split.train) | set(split.val)
        rows = np.array([i for i, d in enumerate(c.doc_ids) if d in members], dtype=np.int64)
        scope = split.train
        seen = np.zeros(c.n_words, dtype=bool)
        for i in train_idx:
            seen[c.docs[i]] = True
        columns = np.flatnonzero(seen)
    doc_ids = tuple(c.doc_ids[i] for i in rows)
    X, idf = build_tfidf(c, doc_ids, scope, columns)
    F = build_pmi(c, scope, window, columns)
    N = build_knn(X, knn) if with_knn and X.n_rows >= 2 else None
    vocab = c.vocab if columns is None else tuple(c.vocab[j] for j in columns)
    return GraphSet(X, F, N, idf, vocab, doc_ids, mode, window, knn)


def graph_token_matrix(g, token):
    if token == "X":
        return g.X
    if token == "TX":
        return transpose(g.X)
    if token == "F":
        return g.F
    if token == "N":
        if g.N is None:
            raise ValueError("architecture uses N but the graph set has no kNN graph")
        return g.N
    raise KeyError(token)


def save_graphs(g, directory, extra_manifest=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    formats.write_coo(g.X, d / "X.coo")
    formats.write_coo(g.F, d / "F.coo")
    if g.N is not None:
        formats.write_coo(g.N, d / "N.coo")
    formats.write_vocab(g.vocab, d / "vocab.tsv")
    formats.write_token_values(g.vocab, g.idf, d / "idf.tsv")
    (d / "docs.txt").write_text("".join(f"{x}\n" for x in g.doc_ids), encoding="utf-8")
    manifest = {
        "mode": g.mode,
        "window": g.window,
        "knn": g.knn,
        "idf_scope": "all" if g.mode == "transductive" else "train",
        "pmi_scope": "all" if g.mode == "transductive" else "train",
        "n_docs": g.n_docs,
        "n_words": g.n_words,
        "has_knn": g.N is not None,
    }
    manifest.update(extra_manifest or {})
    formats.write_json(manifest, d / "graphs.json")


def load_graphs(directory):
    d = Path(directory)
    manifest = formats.read_json(d / "graphs.json")
    vocab = formats.read_vocab(d / "vocab.tsv")
    _, idf = formats.read_token_values(d / "idf.tsv")
    doc_ids = tuple((d / "docs.txt").read_text(encoding="utf-8").splitlines())
    N = formats.read_coo(d / "N.coo") if (d / "N.coo").exists() else None
    return GraphSet(
        formats.read_coo(d / "X.coo"), formats.read_coo(d / "F.coo"), N, idf,
        tuple(vocab), doc_ids, manifest["mode"], manifest["window"], manifest["knn"],
    )
