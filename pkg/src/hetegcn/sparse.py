"""Compressed sparse row matrices and the handful of kernels the models need.

The storage is plain numpy arrays in canonical CSR form (sorted column
indices, no duplicates, no explicit zeros).  Products are delegated to
``scipy.sparse`` which accumulates each output row in a fixed order, so
results do not depend on thread count.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

NORMALIZATIONS = ("raw", "row", "sym")


class SparseFormatError(ValueError):
    """Raised when triplets or CSR arrays are out of range or malformed."""


class ShapeError(ValueError):
    """Raised on non-conforming operand shapes."""


class SparseMatrix:
    """Immutable CSR matrix of 64-bit reals.

    Parameters
    ----------
    n_rows, n_cols : int
        Shape.
    row_offsets : array of int, length ``n_rows + 1``
    col_indices : array of int, length ``nnz``
    values : array of float64, length ``nnz``
    check : bool
        Validate the canonical-form invariants on construction.
    """

    __slots__ = ("n_rows", "n_cols", "row_offsets", "col_indices", "values", "_csr")

    def __init__(self, n_rows, n_cols, row_offsets, col_indices, values, check=True):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.setflags(write=False)
        self._csr = None
        if check:
            validate(self)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.values.shape[0])

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __getstate__(self):
        return (self.n_rows, self.n_cols, self.row_offsets, self.col_indices, self.values)

    def __setstate__(self, state):
        self.__init__(*state, check=False)

    def to_scipy(self):
        """Return a (cached, read-only by convention) ``scipy.sparse.csr_matrix`` view."""
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.values, self.col_indices, self.row_offsets), shape=self.shape, copy=False
            )
        return self._csr

    def toarray(self):
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        out[rows, self.col_indices] = self.values
        return out

    def row_sums(self):
        return np.bincount(
            np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets)),
            weights=self.values,
            minlength=self.n_rows,
        )

    def col_sums(self):
        return np.bincount(self.col_indices, weights=self.values, minlength=self.n_cols)

    def row_nnz(self):
        return np.diff(self.row_offsets)

    def triplets(self):
        """Yield ``(row, col, value)`` in CSR order."""
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        return zip(rows.tolist(), self.col_indices.tolist(), self.values.tolist())

    def select_rows(self, rows):
        """Return the sub-matrix made of ``rows`` (in the given order)."""
        rows = np.asarray(rows, dtype=np.int64)
        return from_scipy(self.to_scipy()[rows])

    def scale(self, row_scale=None, col_scale=None):
        """Return ``diag(row_scale) @ self @ diag(col_scale)``."""
        values = self.values.copy()
        if row_scale is not None:
            values *= np.repeat(np.asarray(row_scale, dtype=np.float64), np.diff(self.row_offsets))
        if col_scale is not None:
            values *= np.asarray(col_scale, dtype=np.float64)[self.col_indices]
        return _drop_zeros(self.n_rows, self.n_cols, self.row_offsets, self.col_indices, values)


def validate(S):
    """Check the canonical CSR invariants, raising :class:`SparseFormatError`."""
    ro, ci, v = S.row_offsets, S.col_indices, S.values
    if S.n_rows < 0 or S.n_cols < 0:
        raise SparseFormatError(f"negative shape {S.shape}")
    if ro.shape != (S.n_rows + 1,):
        raise SparseFormatError(f"row_offsets has length {ro.shape[0]}, expected {S.n_rows + 1}")
    if ro[0] != 0 or ro[-1] != ci.shape[0] or ci.shape != v.shape:
        raise SparseFormatError("row_offsets inconsistent with nnz")
    if np.any(np.diff(ro) < 0):
        raise SparseFormatError("row_offsets must be non-decreasing")
    if ci.size:
        if ci.min() < 0 or ci.max() >= S.n_cols:
            raise SparseFormatError("column index out of range")
        # strictly increasing within each row: a non-increase is only allowed at a row start
        steps = np.diff(ci) <= 0
        row_starts = np.zeros(ci.size, dtype=bool)
        starts = ro[1:-1][ro[1:-1] < ci.size]
        row_starts[starts] = True
        if np.any(steps & ~row_starts[1:]):
            raise SparseFormatError("column indices must be strictly increasing within a row")
    if not np.all(np.isfinite(v)):
        raise SparseFormatError("non-finite stored value")
    if np.any(v == 0):
        raise SparseFormatError("explicit zero stored")
    return S


def _drop_zeros(n_rows, n_cols, row_offsets, col_indices, values):
    keep = values != 0
    if keep.all():
        return SparseMatrix(n_rows, n_cols, row_offsets, col_indices, values, check=False)
    rows = np.repeat(np.arange(n_rows), np.diff(row_offsets))[keep]
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
    return SparseMatrix(n_rows, n_cols, offsets, col_indices[keep], values[keep], check=False)


def from_scipy(M):
    """Canonicalize any scipy sparse matrix into a :class:`SparseMatrix`."""
    M = sp.csr_matrix(M, dtype=np.float64, copy=True)
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return SparseMatrix(M.shape[0], M.shape[1], M.indptr, M.indices, M.data, check=False)


def csr_from_coo(triplets, n_rows, n_cols):
    """Build a canonical CSR matrix from ``(row, col, value)`` triplets.

    Duplicate coordinates are summed and entries that end up zero are dropped.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3 and isinstance(triplets[0], np.ndarray):
        rows, cols, vals = (np.asarray(a) for a in triplets)
    else:
        triplets = list(triplets)
        rows = np.array([t[0] for t in triplets], dtype=np.int64)
        cols = np.array([t[1] for t in triplets], dtype=np.int64)
        vals = np.array([t[2] for t in triplets], dtype=np.float64)
    rows = rows.astype(np.int64, copy=False)
    cols = cols.astype(np.int64, copy=False)
    vals = vals.astype(np.float64, copy=False)
    bad = (rows < 0) | (rows >= n_rows) | (cols < 0) | (cols >= n_cols) | ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise SparseFormatError(
            f"triplet #{i} ({rows[i]}, {cols[i]}, {vals[i]}) invalid for shape ({n_rows}, {n_cols})"
        )
    return from_scipy(sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols)))


def from_dense(A):
    return from_scipy(sp.csr_matrix(np.asarray(A, dtype=np.float64)))


def identity(n):
    return SparseMatrix(n, n, np.arange(n + 1), np.arange(n), np.ones(n), check=False)


def spmm(S, D):
    """Sparse-dense product ``S @ D``."""
    D = np.asarray(D, dtype=np.float64)
    squeeze = D.ndim == 1
    if squeeze:
        D = D[:, None]
    if S.n_cols != D.shape[0]:
        raise ShapeError(f"cannot multiply sparse {S.shape} by dense {D.shape}")
    out = np.asarray(S.to_scipy() @ D)
    return out[:, 0] if squeeze else out


def spgemm(A, B):
    """Sparse-sparse product ``A @ B`` (used for block-adjacency powers)."""
    if A.n_cols != B.n_rows:
        raise ShapeError(f"cannot multiply sparse {A.shape} by sparse {B.shape}")
    return from_scipy(A.to_scipy() @ B.to_scipy())


def transpose(S):
    """Return ``S.T`` in canonical CSR form."""
    order = np.argsort(S.col_indices, kind="stable")
    rows = np.repeat(np.arange(S.n_rows), np.diff(S.row_offsets))
    offsets = np.zeros(S.n_cols + 1, dtype=np.int64)
    np.cumsum(np.bincount(S.col_indices, minlength=S.n_cols), out=offsets[1:])
    # stable sort by column keeps the original row order, so indices stay sorted
    return SparseMatrix(S.n_cols, S.n_rows, offsets, rows[order], S.values[order], check=False)


def _inv_sqrt_degree(deg):
    out = np.ones_like(deg)
    nz = deg > 0
    out[nz] = 1.0 / np.sqrt(deg[nz])
    return out


def normalize(S, mode="raw", col_degrees=None):
    """Normalize a non-negative graph.

    ``row`` divides each row by its sum; ``sym`` scales entry ``(i, j)`` by
    ``1 / sqrt(rowsum_i * colsum_j)``.  Empty rows/columns use degree 1.
    ``col_degrees`` overrides the column sums in ``sym`` mode, which is how
    unseen documents reuse training-time word degrees.
    """
    if mode not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {mode!r}; expected one of {NORMALIZATIONS}")
    if S.nnz and S.values.min() < 0:
        raise ValueError("normalize expects a non-negative matrix")
    if mode == "raw":
        return SparseMatrix(S.n_rows, S.n_cols, S.row_offsets, S.col_indices, S.values, check=False)
    rdeg = S.row_sums()
    if mode == "row":
        scale = np.ones_like(rdeg)
        nz = rdeg > 0
        scale[nz] = 1.0 / rdeg[nz]
        return S.scale(row_scale=scale)
    cdeg = S.col_sums() if col_degrees is None else np.asarray(col_degrees, dtype=np.float64)
    return S.scale(row_scale=_inv_sqrt_degree(rdeg), col_scale=_inv_sqrt_degree(cdeg))


def hstack(blocks):
    return from_scipy(sp.hstack([b.to_scipy() for b in blocks], format="csr"))


def vstack(blocks):
    return from_scipy(sp.vstack([b.to_scipy() for b in blocks], format="csr"))


def zeros(n_rows, n_cols):
    return SparseMatrix(n_rows, n_cols, np.zeros(n_rows + 1), [], [], check=False)
