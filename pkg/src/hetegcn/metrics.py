"""Single-label classification metrics."""

import numpy as np


def _check(truth, predicted):
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise ValueError(f"length mismatch: {truth.shape} vs {predicted.shape}")
    if truth.size == 0:
        raise ValueError("F1 of an empty set is undefined")
    return truth, predicted


def confusion(truth, predicted, k):
    truth, predicted = _check(truth, predicted)
    return np.bincount(truth * k + predicted, minlength=k * k).reshape(k, k)


def micro_f1(truth, predicted):
    """Globally pooled F1.  For single-label data this is the accuracy."""
    truth, predicted = _check(truth, predicted)
    tp = np.sum(truth == predicted)
    # every miss is one FP (for the predicted class) and one FN (for the true class)
    fp = fn = truth.size - tp
    return float(2 * tp / (2 * tp + fp + fn))


def per_class_f1(truth, predicted, k):
    """F1 per class; classes with no true and no predicted instances score 0."""
    C = confusion(truth, predicted, k)
    tp = np.diag(C).astype(np.float64)
    denom = C.sum(axis=0) + C.sum(axis=1)
    out = np.zeros(k)
    nz = denom > 0
    out[nz] = 2 * tp[nz] / denom[nz]
    return out


def macro_f1(truth, predicted, k=None):
    truth, predicted = _check(truth, predicted)
    if k is None:
        k = int(max(truth.max(), predicted.max())) + 1
    if truth.max() >= k or predicted.max() >= k:
        raise ValueError("label index out of range")
    return float(per_class_f1(truth, predicted, k).mean())


def argmax_lowest(P):
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(P), axis=1)
