"""Readers and writers for the on-disk interchange formats.

All reals are written with 17 significant digits so that a write/read
round trip reproduces every float64 exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .sparse import SparseMatrix, csr_from_coo


class FormatError(ValueError):
    """Malformed file contents."""


def fmt_real(x):
    return format(float(x), ".17g")


# --- sparse COO text -------------------------------------------------------

def write_coo(S, path):
    lines = [f"{S.n_rows} {S.n_cols} {S.nnz}\n"]
    lines.extend(f"{r} {c} {fmt_real(v)}\n" for r, c, v in S.triplets())
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_coo(path):
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text:
        raise FormatError(f"{path}: empty file")
    try:
        n_rows, n_cols, nnz = (int(t) for t in text[0].split())
    except ValueError:
        raise FormatError(f"{path}: bad header {text[0]!r}") from None
    body = [ln for ln in text[1:] if ln.strip()]
    if len(body) != nnz:
        raise FormatError(f"{path}: header declares nnz={nnz} but file has {len(body)} entries")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    for i, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{i + 2}: expected 'row col value'")
        rows[i], cols[i], vals[i] = int(parts[0]), int(parts[1]), float(parts[2])
    return csr_from_coo((rows, cols, vals), n_rows, n_cols)


# --- dense binary ----------------------------------------------------------

def write_dense(A, path):
    A = np.ascontiguousarray(A, dtype="<f8")
    if A.ndim != 2:
        raise ValueError("dense matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", *A.shape))
        fh.write(A.tobytes(order="C"))


def read_dense(path):
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    n_rows, n_cols = struct.unpack("<QQ", raw[:16])
    body = raw[16:]
    if len(body) != 8 * n_rows * n_cols:
        raise FormatError(f"{path}: expected {n_rows}x{n_cols} reals, got {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(n_rows, n_cols).astype(np.float64)


# --- token tables ----------------------------------------------------------

def write_vocab(tokens, path):
    Path(path).write_text("".join(f"{t}\t{i}\n" for i, t in enumerate(tokens)), encoding="utf-8")


def read_vocab(path):
    tokens = []
    for lineno, ln in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        tok, _, idx = ln.partition("\t")
        if int(idx) != len(tokens):
            raise FormatError(f"{path}:{lineno}: ids must be dense and in order")
        tokens.append(tok)
    return tokens


def write_token_values(tokens, values, path):
    """``token<TAB>value`` lines (used for idf and column degrees)."""
    Path(path).write_text(
        "".join(f"{t}\t{fmt_real(v)}\n" for t, v in zip(tokens, values)), encoding="utf-8"
    )


def read_token_values(path):
    tokens, values = [], []
    for ln in Path(path).read_text(encoding="utf-8").splitlines():
        tok, _, val = ln.partition("\t")
        tokens.append(tok)
        values.append(float(val))
    return tokens, np.array(values, dtype=np.float64)


def write_embeddings(tokens, E, path):
    with open(path, "w", encoding="utf-8") as fh:
        for tok, row in zip(tokens, np.asarray(E)):
            fh.write(tok + "\t" + " ".join(fmt_real(v) for v in row) + "\n")


def read_embeddings(path):
    tokens, rows = [], []
    for lineno, ln in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        tok, sep, rest = ln.partition("\t")
        if not sep:
            raise FormatError(f"{path}:{lineno}: missing tab")
        tokens.append(tok)
        rows.append([float(v) for v in rest.split()])
    if len({len(r) for r in rows}) > 1:
        raise FormatError(f"{path}: ragged embedding rows")
    return tokens, np.array(rows, dtype=np.float64).reshape(len(rows), -1)


def write_predictions(predictions, label_names, path):
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            probs = " ".join(fmt_real(v) for v in p.probabilities)
            fh.write(f"{p.doc_id}\t{label_names[p.label]}\t{probs}\n")


def read_predictions(path):
    out = []
    for ln in Path(path).read_text(encoding="utf-8").splitlines():
        doc_id, label, probs = ln.split("\t")
        out.append((doc_id, label, np.array([float(v) for v in probs.split()])))
    return out


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
