"""Comparison models built on the same kernels.

* logistic regression on TF-IDF rows, with the inverse L2 strength ``C``
  chosen on validation micro-F1;
* C-LightGCN: document rows of ``a0 I + a1 A + a2 A^2 + a3 A^3`` over the
  word/document block adjacency without the word-word block, fed to the same
  logistic regression;
* the TextGCN block adjacency ``[[F, X^T], [X, 0]]`` (words first).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import sparse
from .metrics import argmax_lowest, macro_f1, micro_f1
from .sparse import hstack, normalize, spgemm, transpose, vstack
from .trainer import fit_softmax_regression, linear_probs

logger = logging.getLogger(__name__)

C_GRID = tuple(10.0 ** e for e in range(-5, 6))


@dataclass
class LinearModel:
    W: np.ndarray
    C: float
    alphas: tuple = None

    def predict_proba(self, features):
        return linear_probs(features, self.W)


@dataclass
class SearchReport:
    """One row per candidate: ``(settings, val micro-F1, test micro-F1, test macro-F1, status)``."""

    rows: list = field(default_factory=list)
    best_index: int = -1


def _scores(P, rows, y, k):
    if rows is None or len(rows) == 0:
        return float("nan"), float("nan")
    pred = argmax_lowest(P[rows])
    return micro_f1(y, pred), macro_f1(y, pred, k)


def train_lr(features, task, n_classes, C_grid=C_GRID, max_iter=1000):
    """Softmax regression with L2 strength ``1/C``; ``C`` picked on validation micro-F1.

    ``features`` has one row per document row referenced by ``task``.
    Returns ``(LinearModel, SearchReport)``.
    """
    C_grid = list(C_grid)
    if not C_grid:
        raise ValueError("empty C grid")
    Xtr = features.select_rows(task.train_rows) if isinstance(features, sparse.SparseMatrix) \
        else np.asarray(features)[task.train_rows]
    report = SearchReport()
    best, best_val = None, -np.inf
    for C in C_grid:
        W = fit_softmax_regression(Xtr, task.train_y, l2=1.0 / C, n_classes=n_classes, max_iter=max_iter)
        P = linear_probs(features, W)
        has_val = task.val_rows is not None and len(task.val_rows) > 0
        val = _scores(P, task.val_rows, task.val_y, n_classes)[0] if has_val \
            else _scores(P, task.train_rows, task.train_y, n_classes)[0]
        test_micro, test_macro = _scores(P, task.test_rows, task.test_y, n_classes)
        report.rows.append(({"C": C}, val, test_micro, test_macro, "ok"))
        if val > best_val:
            best, best_val = LinearModel(W, C), val
            report.best_index = len(report.rows) - 1
    return best, report


def block_adjacency(X, F=None):
    """``[[F or 0, X^T], [X, 0]]`` over ``m`` word nodes then ``n`` document nodes."""
    n, m = X.shape
    top_left = F if F is not None else sparse.zeros(m, m)
    if top_left.shape != (m, m):
        raise ValueError(f"F has shape {top_left.shape}, expected ({m}, {m}) to match X {X.shape}")
    top = hstack([top_left, transpose(X)])
    bottom = hstack([X, sparse.zeros(n, n)])
    return vstack([top, bottom])


def textgcn_adjacency(g):
    """Block adjacency with the PMI graph in the word-word block."""
    return block_adjacency(g.X, g.F)


def clightgcn_features(X, alphas, row_normalize=False):
    """Document rows of ``sum_p alphas[p] * A^p`` for ``p = 0..3``.

    With ``A = [[0, X^T], [X, 0]]`` the document rows are
    ``[a1 X + a3 X X^T X | a0 I + a2 X X^T]`` (word block, then document
    block), computed blockwise.  Pass a normalized ``X`` to get the
    normalized adjacency: symmetric normalization of ``A`` equals the
    rectangular symmetric normalization of ``X``.
    """
    if len(alphas) != 4:
        raise ValueError("need exactly four weights (identity, A, A^2, A^3)")
    a0, a1, a2, a3 = (float(v) for v in alphas)
    n, m = X.shape
    word_block = sparse.zeros(n, m).to_scipy()
    doc_block = sparse.zeros(n, n).to_scipy()
    XXt = spgemm(X, transpose(X)) if (a2 or a3) else None
    if a0:
        doc_block = doc_block + a0 * sparse.identity(n).to_scipy()
    if a1:
        word_block = word_block + a1 * X.to_scipy()
    if a2:
        doc_block = doc_block + a2 * XXt.to_scipy()
    if a3:
        word_block = word_block + a3 * spgemm(XXt, X).to_scipy()
    feats = hstack([sparse.from_scipy(word_block), sparse.from_scipy(doc_block)])
    if row_normalize:
        feats = normalize(feats, "row")
    return feats


def alpha_lattice(values=(0.0, 0.5, 1.0)):
    """Every non-zero 4-tuple over ``values``."""
    return [a for a in itertools.product(values, repeat=4) if any(a)]


def train_clightgcn(X, task, n_classes, alpha_grid, C_grid=C_GRID, row_normalize=False):
    """Joint search over ``(alphas, C)`` on validation micro-F1 (earlier wins ties)."""
    alpha_grid = list(alpha_grid)
    if not alpha_grid:
        raise ValueError("empty alpha grid")
    report = SearchReport()
    best, best_val = None, -np.inf
    for alphas in alpha_grid:
        try:
            feats = clightgcn_features(X, alphas, row_normalize)
            model, sub = train_lr(feats, task, n_classes, C_grid)
        except (ValueError, FloatingPointError) as exc:
            logger.warning("alphas %s failed: %s", alphas, exc)
            report.rows.append(({"alphas": tuple(alphas)}, float("nan"), float("nan"), float("nan"), "failed"))
            continue
        base = len(report.rows)
        for settings, val, tm, tM, status in sub.rows:
            report.rows.append(({"alphas": tuple(alphas), **settings}, val, tm, tM, status))
        val = sub.rows[sub.best_index][1]
        if val > best_val:
            best_val = val
            best = LinearModel(model.W, model.C, tuple(alphas))
            report.best_index = base + sub.best_index
    return best, report
