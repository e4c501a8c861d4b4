"""scikit-learn compatible estimators.

``HeteGCNClassifier`` follows the semi-supervised convention of
``sklearn.semi_supervised``: documents whose label is ``-1`` are unlabeled
but still take part in graph construction (transductive mode).
``predict``/``predict_proba`` classify new documents inductively from the
stored word embeddings; ``transduction_`` holds the labels inferred for the
documents seen during ``fit``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import model as M
from .corpus import Corpus, SplitSet, from_records
from .evaluation import export_feature_embeddings, predict_inductive, tfidf_for_documents
from .graphs import build_graphs, compute_idf
from .sparse import normalize
from .trainer import TrainConfig, TrainTask, train

UNLABELED = -1


def check_documents(X):
    """Return a list of token lists; strings are split on whitespace."""
    if isinstance(X, str):
        raise ValueError("expected a sequence of documents, got a single string")
    docs = []
    for i, doc in enumerate(X):
        tokens = doc.split() if isinstance(doc, str) else [str(t) for t in doc]
        if not tokens:
            raise ValueError(f"document {i} has no tokens")
        docs.append(tokens)
    if not docs:
        raise ValueError("no documents")
    return docs


def check_labels(y, n_docs):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_docs:
        raise ValueError(f"y must be 1-D with {n_docs} entries, got shape {y.shape}")
    return y


def _corpus(docs, labels=None, label_names=("_",)):
    recs = [(str(i), label_names[0], toks) for i, toks in enumerate(docs)]
    c = from_records(recs, label_names=list(label_names))
    if labels is not None:
        c = Corpus(c.doc_ids, c.docs, np.asarray(labels, dtype=np.int64), c.vocab, tuple(label_names))
    return c


class TfidfGraphVectorizer(TransformerMixin, BaseEstimator):
    """Documents to the (normalized) TF-IDF rows used as the ``X`` graph.

    Term frequency is the raw count, idf is ``ln(n_docs / df)``.
    """

    def __init__(self, normalization="raw"):
        self.normalization = normalization

    def fit(self, X, y=None):
        docs = check_documents(X)
        c = _corpus(docs)
        self.vocabulary_ = c.vocab
        self.idf_ = compute_idf(c)
        counts = tfidf_for_documents(self, docs)
        self.col_degrees_ = counts.col_sums()
        return self

    @property
    def vocab(self):
        return self.vocabulary_

    @property
    def idf(self):
        return self.idf_

    def transform(self, X):
        check_is_fitted(self, "idf_")
        rows = tfidf_for_documents(self, check_documents(X))
        return normalize(rows, self.normalization, col_degrees=self.col_degrees_).to_scipy()


class HeteGCNClassifier(ClassifierMixin, BaseEstimator):
    """Heterogeneous graph convolutional text classifier.

    Parameters
    ----------
    architecture : str
        Layer chain such as ``"F-X"``, ``"X-TX-X"`` or ``"fuse(F,TX)-X"``.
    hidden_dim : int
        Embedding width of hidden layers.
    graph_mode : {"transductive", "inductive"}
        Whether unlabeled documents passed to ``fit`` join graph construction.
    validation_fraction : float
        Share of labeled documents held out for early stopping.
    """

    def __init__(self, architecture="F-X", hidden_dim=200, input_mode="onehot", normalization="row",
                 simplified=False, combine="sum", window=20, knn=25, graph_mode="transductive",
                 lr=0.01, weight_decay=0.0, emb_reg=0.0, dropout=0.0, max_epochs=300, patience=30,
                 validation_fraction=0.1, random_state=0):
        self.architecture = architecture
        self.hidden_dim = hidden_dim
        self.input_mode = input_mode
        self.normalization = normalization
        self.simplified = simplified
        self.combine = combine
        self.window = window
        self.knn = knn
        self.graph_mode = graph_mode
        self.lr = lr
        self.weight_decay = weight_decay
        self.emb_reg = emb_reg
        self.dropout = dropout
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(lr=self.lr, weight_decay=self.weight_decay, emb_reg=self.emb_reg,
                           dropout=self.dropout, normalization=self.normalization,
                           max_epochs=self.max_epochs, patience=self.patience, seed=self.random_state)

    def fit(self, X, y):
        docs = check_documents(X)
        y = check_labels(y, len(docs))
        labeled = np.flatnonzero(y != UNLABELED)
        if labeled.size == 0:
            raise ValueError("no labeled documents")
        self.classes_, encoded = np.unique(y[labeled], return_inverse=True)
        labels = np.zeros(len(docs), dtype=np.int64)
        labels[labeled] = encoded
        c = _corpus(docs, labels, tuple(str(k) for k in self.classes_))

        rng = np.random.default_rng([self.random_state, 2])
        perm = rng.permutation(labeled)
        n_val = int(np.floor(self.validation_fraction * labeled.size + 0.5)) if labeled.size > 1 else 0
        val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
        split = SplitSet(tuple(c.doc_ids[i] for i in train_idx), tuple(c.doc_ids[i] for i in val_idx), ())

        self.arch_ = M.parse_architecture(self.architecture, self.input_mode, self.hidden_dim,
                                          self.simplified, self.combine)
        self.graphs_ = build_graphs(c, split, self.window, self.knn, self.graph_mode,
                                    with_knn=any(l.graph_token == "N" for l in self.arch_.all_layers))
        mg = M.ModelGraphs(self.graphs_, self.normalization)
        index = {d: i for i, d in enumerate(self.graphs_.doc_ids)}
        tr = np.array([index[d] for d in split.train], dtype=np.int64)
        va = np.array([index[d] for d in split.val], dtype=np.int64)
        task = TrainTask(tr, labels[train_idx], va, labels[val_idx])
        self.params_, self.report_ = train(self.arch_, mg, task, self._train_config(), len(self.classes_))

        P = M.forward(self.arch_, self.params_, mg).probs
        self.transduction_proba_ = P
        self.transduction_ = self.classes_[np.argmax(P, axis=1)]
        try:
            self.embeddings_ = export_feature_embeddings(self.arch_, self.params_, mg)
        except ValueError:
            self.embeddings_ = None
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        if self.embeddings_ is None:
            raise ValueError(f"{self.architecture} cannot classify unseen documents; use transduction_")
        c = _corpus(check_documents(X))
        preds = predict_inductive(self.embeddings_, self.params_.weights[-1], c)
        return np.vstack([p.probabilities for p in preds])

    def predict(self, X):
        P = self.predict_proba(X)
        return self.classes_[np.argmax(P, axis=1)]
