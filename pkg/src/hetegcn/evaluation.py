"""Prediction (transductive and inductive), embedding export and word saliency."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from . import model as M
from .metrics import argmax_lowest
from .sparse import csr_from_coo, normalize, spmm
from .trainer import fit_softmax_regression, linear_probs

logger = logging.getLogger(__name__)


class InductionError(ValueError):
    """The architecture has no word-level layer whose output can be stored."""


@dataclass(frozen=True)
class Prediction:
    doc_id: str
    label: int
    probabilities: np.ndarray


def _predictions(doc_ids, P):
    labels = argmax_lowest(P)
    return [Prediction(d, int(l), P[i]) for i, (d, l) in enumerate(zip(doc_ids, labels))]


def predict_transductive(a, params, mg, doc_ids, graph_doc_ids):
    """Eval-mode forward over the training graph, restricted to ``doc_ids``."""
    index = {d: i for i, d in enumerate(graph_doc_ids)}
    missing = [d for d in doc_ids if d not in index]
    if missing:
        raise KeyError(f"unknown doc id {missing[0]!r}")
    offset = M.output_doc_rows(a, mg)
    rows = np.array([index[d] for d in doc_ids], dtype=np.int64) + offset
    P = M.forward(a, params, mg).probs
    return _predictions(list(doc_ids), P[rows])


@dataclass
class FeatureEmbeddings:
    """Stored word embeddings plus what test-time ``X`` rows need.

    ``col_degrees`` are the training ``X`` column sums, reused for the
    column scaling of symmetric normalization.
    """

    vocab: tuple
    matrix: np.ndarray
    layer: str
    normalization: str
    idf: np.ndarray
    col_degrees: np.ndarray

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        formats.write_embeddings(self.vocab, self.matrix, d / "embeddings.tsv")
        formats.write_token_values(self.vocab, self.idf, d / "idf.tsv")
        formats.write_token_values(self.vocab, self.col_degrees, d / "col_degrees.tsv")
        formats.write_json({"layer": self.layer, "normalization": self.normalization}, d / "embeddings.json")

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        vocab, E = formats.read_embeddings(d / "embeddings.tsv")
        _, idf = formats.read_token_values(d / "idf.tsv")
        _, cdeg = formats.read_token_values(d / "col_degrees.tsv")
        meta = formats.read_json(d / "embeddings.json")
        return cls(tuple(vocab), E, meta["layer"], meta["normalization"], idf, cdeg)


def stored_layer_tag(a):
    """Name of the word-level prefix whose output is stored, or raise."""
    if a.layers[-1].graph_token != "X":
        raise InductionError(
            f"{a.name}: inductive inference needs a final X layer fed by stored word embeddings"
        )
    if a.branches:
        return a.name[: -len("-X")]
    if len(a.layers) < 2:
        raise InductionError(f"{a.name}: no word-level layer output to store (input is one-hot)")
    return "-".join(l.graph_token for l in a.layers[:-1])


def export_feature_embeddings(a, params, mg):
    """Eval-mode word embeddings feeding the final ``X`` layer."""
    tag = stored_layer_tag(a)
    trace = M.forward(a, params, mg)
    U = trace.word_embeddings
    g = mg.graphs
    return FeatureEmbeddings(tuple(g.vocab), np.array(U), tag, mg.normalization, g.idf.copy(), g.X.col_sums())


def final_weights(params):
    return params.weights[-1]


def tfidf_for_documents(fe, docs_tokens):
    """Test ``X`` rows from raw tokens with the stored vocabulary and idf (OOV dropped)."""
    index = {t: j for j, t in enumerate(fe.vocab)}
    rows, cols = [], []
    oov = 0
    for r, tokens in enumerate(docs_tokens):
        for t in tokens:
            j = index.get(t)
            if j is None:
                oov += 1
                continue
            rows.append(r)
            cols.append(j)
    if oov:
        logger.info("ignored %d out-of-vocabulary tokens", oov)
    rows = np.array(rows, dtype=np.int64)
    cols = np.array(cols, dtype=np.int64)
    vals = fe.idf[cols] if cols.size else np.zeros(0)
    return csr_from_coo((rows, cols, vals), len(docs_tokens), len(fe.vocab))


def predict_inductive(fe, W_final, test_docs):
    """Classify unseen documents with stored word embeddings.

    ``test_docs`` is a :class:`~hetegcn.corpus.Corpus` (its tokens are
    matched to the stored vocabulary by string).  Documents with no known
    token get the uniform distribution.
    """
    W_final = np.asarray(W_final)
    if fe.matrix.shape[1] != W_final.shape[0]:
        raise ValueError(
            f"embedding width {fe.matrix.shape[1]} does not match final weights {W_final.shape}"
        )
    tokens = [test_docs.tokens(i) for i in range(test_docs.n_docs)]
    X = tfidf_for_documents(fe, tokens)
    Xn = normalize(X, fe.normalization, col_degrees=fe.col_degrees)
    P = M.softmax(spmm(Xn, fe.matrix @ W_final))
    empty = Xn.row_nnz() == 0
    if empty.any():
        logger.warning("%d documents have no known tokens; predicting uniform", int(empty.sum()))
        P[empty] = 1.0 / W_final.shape[1]
    return _predictions(list(test_docs.doc_ids), P)


def class_salient_words(doc_embeddings, labels, word_embeddings, vocab, top_k=10, l2=1e-4, n_classes=None):
    """Rank words per class by a softmax classifier trained on document embeddings.

    Returns a list (one per class) of ``(token, probability)`` lists.
    """
    doc_embeddings = np.asarray(doc_embeddings, dtype=np.float64)
    word_embeddings = np.asarray(word_embeddings, dtype=np.float64)
    if doc_embeddings.shape[1] != word_embeddings.shape[1]:
        raise ValueError(
            f"document embeddings have width {doc_embeddings.shape[1]}, words {word_embeddings.shape[1]}"
        )
    W = fit_softmax_regression(doc_embeddings, labels, l2=l2, n_classes=n_classes)
    P = linear_probs(word_embeddings, W)
    out = []
    for c in range(W.shape[1]):
        order = np.argsort(-P[:, c], kind="stable")[:top_k]
        out.append([(vocab[j], float(P[j, c])) for j in order])
    return out


def document_embeddings(a, params, mg):
    """Document embeddings feeding the classifier.

    For a final ``X`` layer these are the stored word embeddings aggregated
    through the normalized ``X`` graph.
    """
    trace = M.forward(a, params, mg)
    if len(trace.records) >= 2 and a.layers[-1].in_entity == "doc":
        return trace.records[-1].source
    return spmm(mg.matrix("X"), trace.word_embeddings)
