"""Full-batch training: cross-entropy loss, exact gradients, Adam, sweeps."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import model as M
from .metrics import argmax_lowest, macro_f1, micro_f1

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Non-finite loss or another unrecoverable training failure."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 0.0
    emb_reg: float = 0.0
    dropout: float = 0.0
    normalization: str = "row"
    max_epochs: int = 300
    patience: int = 30
    lr_decay_factor: float = 0.99
    lr_decay_every: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.normalization not in ("raw", "row", "sym"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def lr_at(self, epoch):
        return self.lr * self.lr_decay_factor ** (epoch // self.lr_decay_every)

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


TRAIN_FIELDS = tuple(f.name for f in fields(TrainConfig))


# --- loss -----------------------------------------------------------------

def regularization(a, params, weight_decay, emb_reg):
    first = set(a.first_layer_indices)
    total = 0.0
    for i, W in enumerate(params.weights):
        lam = emb_reg if i in first else weight_decay
        if lam:
            total += 0.5 * lam * float(np.sum(W * W))
    return total


def loss_and_gradients(a, params, mg, rows, y, weight_decay=0.0, emb_reg=0.0,
                       dropout=0.0, rng=None, training=True):
    """Mean cross-entropy over labeled rows plus L2 terms, and exact gradients.

    ``rows`` are document rows of the network output (already offset for
    block-adjacency models) and ``y`` their class indices.  ``weight_decay``
    applies to every weight except the input-embedding layers, which use
    ``emb_reg``.
    """
    rows = np.asarray(rows, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("no labeled training rows")
    trace = M.forward(a, params, mg, dropout=dropout, training=training, rng=rng)
    logp = M.log_softmax(trace.logits[rows])
    ce = -float(np.mean(logp[np.arange(rows.size), y]))
    loss = ce + regularization(a, params, weight_decay, emb_reg)

    dlogits = np.zeros_like(trace.logits)
    G = trace.probs[rows].copy()
    G[np.arange(rows.size), y] -= 1.0
    np.add.at(dlogits, rows, G / rows.size)
    grads = M.backward(a, params, mg, trace, dlogits)
    first = set(a.first_layer_indices)
    for i, W in enumerate(params.weights):
        lam = emb_reg if i in first else weight_decay
        if lam:
            grads[i] = grads[i] + lam * W
    return loss, grads, trace


# --- optimizer ------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(w) for w in params.weights], [np.zeros_like(w) for w in params.weights])


def adam_step(params, state, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place.  Returns ``(params, state)``."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for W, m, v, g in zip(params.weights, state.m, state.v, grads):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        W -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


# --- early stopping -------------------------------------------------------

class EarlyStopping:
    """Patience on strict validation improvements.

    The best epoch is the one with the highest score; among equal scores the
    lower training loss wins, but only a strict score increase resets patience.
    """

    def __init__(self, patience=30):
        self.patience = patience
        self.best_score = -math.inf
        self.best_loss = math.inf
        self.best_epoch = -1
        self.last_improvement = -1

    def update(self, epoch, score, loss=0.0):
        """Record an epoch.  Returns True when this epoch becomes the best."""
        better = score > self.best_score or (score == self.best_score and loss < self.best_loss)
        if score > self.best_score:
            self.last_improvement = epoch
        if better:
            self.best_score, self.best_loss, self.best_epoch = score, loss, epoch
        return better

    def should_stop(self, epoch):
        return epoch - self.last_improvement >= self.patience


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("nan")
    stopped_early: bool = False

    COLUMNS = ("epoch", "lr", "train_loss", "train_f1", "val_f1", "seconds")

    @property
    def n_epochs(self):
        return len(self.epochs)

    @property
    def seconds_per_epoch(self):
        return float(np.mean([e["seconds"] for e in self.epochs])) if self.epochs else 0.0

    @property
    def losses(self):
        return [e["train_loss"] for e in self.epochs]

    def to_tsv(self, timing=True):
        cols = self.COLUMNS if timing else self.COLUMNS[:-1]
        lines = ["\t".join(cols)]
        for e in self.epochs:
            lines.append("\t".join(str(e[c]) if c == "epoch" else format(e[c], ".17g") for c in cols))
        return "\n".join(lines) + "\n"


@dataclass
class TrainTask:
    """Row bookkeeping for one training problem on a fixed graph set."""

    train_rows: np.ndarray
    train_y: np.ndarray
    val_rows: np.ndarray
    val_y: np.ndarray
    test_rows: np.ndarray = None
    test_y: np.ndarray = None


def evaluate_rows(probs, rows, y, k=None):
    if rows is None or len(rows) == 0:
        return float("nan"), float("nan")
    pred = argmax_lowest(probs[rows])
    return micro_f1(y, pred), macro_f1(y, pred, k if k is not None else probs.shape[1])


def train(a, mg, task, cfg, n_classes, params=None):
    """Train with Adam and early stopping; return the best-validation weights.

    The learning rate at epoch ``e`` is ``lr * decay ** (e // decay_every)``.
    Without validation rows the training micro-F1 drives model selection.
    """
    dims = mg.input_dims()
    if params is None:
        params = M.init_params(a, mg.n, mg.m, n_classes, seed=[cfg.seed, 0], input_dims=dims)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng([cfg.seed, 1])
    stopper = EarlyStopping(cfg.patience)
    report = TrainReport()
    best = params.copy()
    has_val = task.val_rows is not None and len(task.val_rows) > 0

    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        lr = cfg.lr_at(epoch)
        loss, grads, _ = loss_and_gradients(
            a, params, mg, task.train_rows, task.train_y,
            cfg.weight_decay, cfg.emb_reg, cfg.dropout, rng, training=True,
        )
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}", report)
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient at epoch {epoch}, layer {i}", report)
        adam_step(params, state, grads, lr, cfg.beta1, cfg.beta2, cfg.eps)

        probs = M.forward(a, params, mg).probs
        train_f1 = micro_f1(task.train_y, argmax_lowest(probs[task.train_rows]))
        val_f1 = micro_f1(task.val_y, argmax_lowest(probs[task.val_rows])) if has_val else train_f1
        report.epochs.append({
            "epoch": epoch, "lr": lr, "train_loss": loss, "train_f1": train_f1,
            "val_f1": val_f1, "seconds": time.perf_counter() - t0,
        })
        if stopper.update(epoch, val_f1, loss):
            best = params.copy()
        if stopper.should_stop(epoch):
            report.stopped_early = True
            break

    report.best_epoch = stopper.best_epoch
    report.best_val = stopper.best_score
    return best, report


def fit_softmax_regression(features, y, l2=0.0, n_classes=None, max_iter=1000, tol=1e-10, W0=None):
    """Multinomial logistic regression (no intercept) on fixed document features.

    Uses the shared loss/gradient code on a single identity-graph softmax
    layer and minimizes it with L-BFGS.  Returns the ``(dim, k)`` weights.
    """
    from scipy.optimize import minimize

    y = np.asarray(y, dtype=np.int64)
    k = n_classes if n_classes is not None else int(y.max()) + 1
    mg = M.ModelGraphs.from_features(features)
    a = M.parse_architecture("I", input_mode="external", hidden_dim=1)
    dim = mg.input_dims()["doc"]
    rows = np.arange(mg.n)
    shape = (dim, k)
    params = M.ModelParams([np.zeros(shape) if W0 is None else np.array(W0, dtype=np.float64)])

    def fun(w):
        params.weights[0] = w.reshape(shape)
        loss, grads, _ = loss_and_gradients(a, params, mg, rows, y, 0.0, l2, training=False)
        return loss, grads[0].ravel()

    res = minimize(fun, params.weights[0].ravel(), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-9})
    return res.x.reshape(shape)


def linear_probs(features, W):
    from .sparse import SparseMatrix, spmm

    Z = spmm(features, W) if isinstance(features, SparseMatrix) else np.asarray(features) @ W
    return M.softmax(Z)


# --- sweeps ---------------------------------------------------------------

def default_grid():
    """The full hyperparameter lattice (learning rate, L2 terms, dropout, normalization)."""
    l2 = [0.0] + [10.0 ** e for e in range(-3, 3)]
    return {
        "lr": [1e-2, 1e-3, 1e-4],
        "weight_decay": l2,
        "emb_reg": list(l2),
        "dropout": [0.0, 0.25, 0.5, 0.75],
        "normalization": ["raw", "row", "sym"],
    }


def enumerate_grid(grid, base=None):
    """Cartesian product of ``grid`` (dict of field -> values) in declared order."""
    base = base or TrainConfig()
    unknown = set(grid) - set(TRAIN_FIELDS)
    if unknown:
        raise ValueError(f"unknown grid fields {sorted(unknown)}")
    if not grid:
        return [base]
    keys = list(grid)
    for k in keys:
        if not grid[k]:
            raise ValueError(f"grid field {k!r} has no values")
    return [replace(base, **dict(zip(keys, combo))) for combo in itertools.product(*(grid[k] for k in keys))]


@dataclass
class SweepResult:
    config: TrainConfig
    status: str
    best_val: float = float("nan")
    test_micro: float = float("nan")
    test_macro: float = float("nan")
    epochs: int = 0
    seconds_per_epoch: float = 0.0
    params: object = None
    report: object = None
    error: str = ""

    COLUMNS = ("config_hash", *TRAIN_FIELDS, "status", "best_val_micro_f1",
               "test_micro_f1", "test_macro_f1", "epochs", "seconds_per_epoch")

    def row(self):
        cfg = self.config.to_dict()
        vals = [self.config.digest()] + [str(cfg[f]) for f in TRAIN_FIELDS]
        vals += [self.status, _fmt(self.best_val), _fmt(self.test_micro), _fmt(self.test_macro),
                 str(self.epochs), _fmt(self.seconds_per_epoch)]
        return vals


def _fmt(x):
    return format(float(x), ".17g")


def run_config(a, graph_for, task, cfg, n_classes):
    """Train one configuration and evaluate it; failures become a status."""
    try:
        mg = graph_for(cfg.normalization)
        params, report = train(a, mg, task, cfg, n_classes)
        probs = M.forward(a, params, mg).probs
        micro, macro = evaluate_rows(probs, task.test_rows, task.test_y, n_classes)
        return SweepResult(cfg, "ok", report.best_val, micro, macro, report.n_epochs,
                           report.seconds_per_epoch, params, report)
    except (TrainingError, ValueError, FloatingPointError) as exc:
        logger.warning("configuration %s failed: %s", cfg.digest(), exc)
        return SweepResult(cfg, "failed", error=str(exc))


def select_best(results):
    """Highest validation micro-F1; ties go to the earliest configuration."""
    best = None
    for r in results:
        if r.status != "ok":
            continue
        if best is None or r.best_val > best.best_val:
            best = r
    return best


def sweep(a, graph_for, task, configs, n_classes, skip=None, on_result=None):
    """Train every configuration in order and return ``(best, results)``.

    ``graph_for(normalization)`` returns the :class:`~hetegcn.model.ModelGraphs`
    to use; ``skip`` maps config digests to already-finished results.
    """
    if not configs:
        raise ValueError("empty sweep grid")
    results = []
    for cfg in configs:
        if skip and cfg.digest() in skip:
            results.append(skip[cfg.digest()])
            continue
        res = run_config(a, graph_for, task, cfg, n_classes)
        results.append(res)
        if on_result is not None:
            on_result(res)
    return select_best(results), results
