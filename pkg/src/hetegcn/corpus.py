"""Tokenized, labeled corpora and train/val/test splits."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    """Malformed corpus or split input."""


@dataclass(frozen=True)
class Corpus:
    """Documents as token-id arrays with one label each.

    ``vocab`` maps id -> token; ``label_names`` maps class index -> label.
    ``dropped`` lists doc ids removed by preprocessing because they became empty.
    """

    doc_ids: tuple
    docs: tuple
    labels: np.ndarray
    vocab: tuple
    label_names: tuple
    dropped: tuple = ()
    _token_index: dict = field(default=None, repr=False, compare=False)
    _doc_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_token_index", {t: i for i, t in enumerate(self.vocab)})
        object.__setattr__(self, "_doc_index", {d: i for i, d in enumerate(self.doc_ids)})

    @property
    def n_docs(self):
        return len(self.docs)

    @property
    def n_words(self):
        return len(self.vocab)

    @property
    def n_classes(self):
        return len(self.label_names)

    def token_id(self, token):
        return self._token_index.get(token)

    def doc_index(self, doc_id):
        try:
            return self._doc_index[doc_id]
        except KeyError:
            raise CorpusError(f"unknown doc id {doc_id!r}") from None

    def indices(self, doc_ids):
        return np.array([self.doc_index(d) for d in doc_ids], dtype=np.int64)

    def tokens(self, i):
        return [self.vocab[t] for t in self.docs[i]]

    def subset(self, doc_ids):
        """Documents ``doc_ids`` in the given order, sharing the vocabulary."""
        idx = self.indices(doc_ids)
        return Corpus(
            doc_ids=tuple(self.doc_ids[i] for i in idx),
            docs=tuple(self.docs[i] for i in idx),
            labels=self.labels[idx],
            vocab=self.vocab,
            label_names=self.label_names,
        )


def from_records(records, label_names=None):
    """Build a corpus from ``(doc_id, label, tokens)`` triples.

    Labels get dense indices by first appearance unless ``label_names`` fixes
    the order.  Tokens get dense ids by first appearance.
    """
    label_index = {lab: i for i, lab in enumerate(label_names or ())}
    fixed = label_names is not None
    vocab, token_index = [], {}
    doc_ids, docs, labels, seen = [], [], [], set()
    for doc_id, label, tokens in records:
        if doc_id in seen:
            raise CorpusError(f"duplicate doc id {doc_id!r}")
        seen.add(doc_id)
        if label not in label_index:
            if fixed:
                raise CorpusError(f"document {doc_id!r} has unknown label {label!r}")
            label_index[label] = len(label_index)
        ids = []
        for tok in tokens:
            if tok not in token_index:
                token_index[tok] = len(vocab)
                vocab.append(tok)
            ids.append(token_index[tok])
        doc_ids.append(doc_id)
        docs.append(np.array(ids, dtype=np.int64))
        labels.append(label_index[label])
    names = sorted(label_index, key=label_index.get)
    return Corpus(tuple(doc_ids), tuple(docs), np.array(labels, dtype=np.int64), tuple(vocab), tuple(names))


def read_corpus_records(path):
    """Parse a ``doc_id<TAB>label<TAB>tokens`` file into raw records."""
    records, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
            doc_id, label, text = fields
            if doc_id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate doc id {doc_id!r}")
            seen.add(doc_id)
            tokens = text.split()
            if not tokens:
                raise CorpusError(f"{path}:{lineno}: document {doc_id!r} has no tokens")
            records.append((doc_id, label, tokens))
    return records


def load_corpus(path):
    return from_records(read_corpus_records(path))


def write_corpus(c, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, doc_id in enumerate(c.doc_ids):
            fh.write(f"{doc_id}\t{c.label_names[c.labels[i]]}\t{' '.join(c.tokens(i))}\n")


def load_stopwords(path):
    return {ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()}


def preprocess(c, stopwords=(), min_count=5, skip_filtering=False):
    """Remove stopwords and rare tokens, then re-densify the vocabulary.

    Tokens whose total corpus count is below ``min_count`` are removed
    everywhere.  Documents left empty are dropped and listed in
    ``Corpus.dropped``.  With ``skip_filtering`` the corpus is returned as is
    (short-text corpora).
    """
    if min_count < 0:
        raise ValueError("min_count must be non-negative")
    if skip_filtering:
        return c
    counts = np.zeros(c.n_words, dtype=np.int64)
    for doc in c.docs:
        counts += np.bincount(doc, minlength=c.n_words)
    stop = {c.token_id(t) for t in stopwords} - {None}
    keep = counts >= min_count
    keep[list(stop)] = False
    new_id = np.full(c.n_words, -1, dtype=np.int64)
    new_id[keep] = np.arange(int(keep.sum()))
    vocab = tuple(t for t, k in zip(c.vocab, keep) if k)

    doc_ids, docs, labels, dropped = [], [], [], []
    for doc_id, doc, label in zip(c.doc_ids, c.docs, c.labels):
        mapped = new_id[doc]
        mapped = mapped[mapped >= 0]
        if mapped.size == 0:
            dropped.append(doc_id)
            continue
        doc_ids.append(doc_id)
        docs.append(mapped)
        labels.append(label)
    if dropped:
        logger.warning("dropped %d documents left empty by filtering", len(dropped))
    return Corpus(
        tuple(doc_ids), tuple(docs), np.array(labels, dtype=np.int64), vocab, c.label_names,
        dropped=c.dropped + tuple(dropped),
    )


@dataclass(frozen=True)
class SplitSet:
    train: tuple
    val: tuple
    test: tuple
    label_fraction: float = 100.0
    repeat_index: int = 0

    def __post_init__(self):
        a, b, t = set(self.train), set(self.val), set(self.test)
        if a & b or a & t or b & t:
            raise CorpusError("train/val/test sets must be disjoint")

    def check_against(self, c):
        for name in ("train", "val", "test"):
            for d in getattr(self, name):
                c.doc_index(d)
        return self

    def to_dict(self):
        return {
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
            "label_fraction": self.label_fraction,
            "repeat_index": self.repeat_index,
        }

    @classmethod
    def from_dict(cls, d):
        missing = {"train", "val", "test"} - set(d)
        if missing:
            raise CorpusError(f"split is missing keys {sorted(missing)}")
        return cls(
            tuple(d["train"]), tuple(d["val"]), tuple(d["test"]),
            float(d.get("label_fraction", 100.0)), int(d.get("repeat_index", 0)),
        )


def load_split(path):
    return SplitSet.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_split(s, path):
    Path(path).write_text(json.dumps(s.to_dict(), indent=2) + "\n", encoding="utf-8")


def split_standard(c, test_ids, val_fraction=0.1, seed=0, stratified=False):
    """Hold out ``test_ids`` and sample a validation set from the rest.

    Sampling is uniform by default; with ``stratified`` each class gives
    ``round(val_fraction * class size)`` documents.
    """
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must be in (0, 1)")
    test = set(test_ids)
    for d in test:
        c.doc_index(d)
    rest = [d for d in c.doc_ids if d not in test]
    rng = np.random.default_rng(seed)
    if stratified:
        val_set = set()
        for k in range(c.n_classes):
            members = [d for d in rest if c.labels[c.doc_index(d)] == k]
            n_val = int(math.floor(val_fraction * len(members) + 0.5))
            val_set.update(members[i] for i in rng.permutation(len(members))[:n_val])
    else:
        n_val = int(math.floor(val_fraction * len(rest) + 0.5))
        val_set = {rest[i] for i in rng.permutation(len(rest))[:n_val]}
    train = tuple(d for d in rest if d not in val_set)
    val = tuple(d for d in rest if d in val_set)
    return SplitSet(train, val, tuple(d for d in c.doc_ids if d in test))


def stratified_count(fraction, class_size):
    """Per-class sample size: ``max(1, round(fraction% * size))``, half rounded up."""
    return max(1, int(math.floor(fraction / 100.0 * class_size + 0.5)))


def split_small_label(base, c, fractions=(1, 5, 10, 20), repeats=5, seed=0):
    """Nested stratified subsamples of ``base.train``.

    Returns one :class:`SplitSet` per ``(repeat, fraction)``, repeat-major.
    For each repeat the per-class permutation is drawn once and every fraction
    takes a prefix of it, so smaller labeled sets are contained in larger ones.
    """
    fractions = list(fractions)
    if fractions != sorted(fractions):
        raise ValueError("fractions must be ascending")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    by_class = {k: [] for k in range(c.n_classes)}
    for d in base.train:
        by_class[int(c.labels[c.doc_index(d)])].append(d)
    for k, members in by_class.items():
        if not members:
            raise CorpusError(f"class {c.label_names[k]!r} has no training documents to sample")
    out = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        perms = {k: [members[i] for i in rng.permutation(len(members))] for k, members in by_class.items()}
        for f in fractions:
            chosen = set()
            for k, perm in perms.items():
                chosen.update(perm[: min(len(perm), stratified_count(f, len(perm)))])
            train = tuple(d for d in base.train if d in chosen)
            out.append(SplitSet(train, base.val, base.test, float(f), r))
    return out
