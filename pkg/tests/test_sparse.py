import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetegcn import sparse
from hetegcn.sparse import (ShapeError, SparseFormatError, csr_from_coo, from_dense, identity,
                            normalize, spmm, transpose, validate)
from oracles import dense_accumulate, normalize_dense


def random_sparse(rng, n_rows, n_cols, density=0.3, low=0.0, high=1.0):
    A = rng.uniform(low, high, size=(n_rows, n_cols))
    A[rng.random((n_rows, n_cols)) >= density] = 0.0
    return A


@st.composite
def triplet_lists(draw, max_dim=8, max_len=50):
    n_rows = draw(st.integers(1, max_dim))
    n_cols = draw(st.integers(1, max_dim))
    entries = draw(st.lists(
        st.tuples(st.integers(0, n_rows - 1), st.integers(0, n_cols - 1),
                  st.integers(-3, 3).map(float)),
        max_size=max_len))
    return entries, n_rows, n_cols


class TestCsrFromCoo:
    def test_duplicates_are_summed(self):
        S = csr_from_coo([(0, 0, 1.0), (0, 0, 2.0)], 1, 1)
        assert S.nnz == 1
        assert S.toarray()[0, 0] == 3.0

    def test_cancellation_is_dropped(self):
        S = csr_from_coo([(0, 1, 1.0), (1, 0, -1.0), (1, 0, 1.0)], 2, 2)
        assert list(S.triplets()) == [(0, 1, 1.0)]

    def test_random_triplets_match_dense_accumulation(self):
        rng = np.random.default_rng(0)
        trip = [(int(r), int(c), float(v)) for r, c, v in
                zip(rng.integers(0, 8, 50), rng.integers(0, 8, 50), rng.normal(size=50))]
        S = csr_from_coo(trip, 8, 8)
        np.testing.assert_array_equal(S.toarray(), dense_accumulate(trip, 8, 8))

    @given(triplet_lists())
    def test_canonical_form(self, case):
        trip, n_rows, n_cols = case
        S = csr_from_coo(trip, n_rows, n_cols)
        validate(S)
        assert np.all(S.values != 0)
        np.testing.assert_array_equal(S.toarray(), dense_accumulate(trip, n_rows, n_cols))

    @pytest.mark.parametrize("bad", [(2, 0, 1.0), (0, 5, 1.0), (-1, 0, 1.0)])
    def test_out_of_range_names_triplet(self, bad):
        with pytest.raises(SparseFormatError, match=str(bad[0])):
            csr_from_coo([(0, 0, 1.0), bad], 2, 2)

    def test_non_finite_rejected(self):
        with pytest.raises(SparseFormatError):
            csr_from_coo([(0, 0, np.nan)], 1, 1)


class TestSpmm:
    def test_identity(self):
        D = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(spmm(identity(2), D), D)

    def test_permutation(self):
        P = from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
        D = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(spmm(P, D), [[3.0, 4.0], [1.0, 2.0]])

    def test_matches_dense_product(self):
        rng = np.random.default_rng(1)
        A = random_sparse(rng, 5, 4)
        D = rng.normal(size=(4, 3))
        assert np.max(np.abs(spmm(from_dense(A), D) - A @ D)) <= 1e-12

    def test_transpose_product(self):
        rng = np.random.default_rng(2)
        A = random_sparse(rng, 6, 4, high=1e3)
        D = rng.uniform(-1e3, 1e3, size=(6, 5))
        got = spmm(transpose(from_dense(A)), D)
        np.testing.assert_allclose(got, A.T @ D, rtol=1e-12, atol=1e-12 * np.abs(A.T @ D).max())

    def test_sparse_times_identity_is_densify(self):
        rng = np.random.default_rng(3)
        A = random_sparse(rng, 4, 6)
        np.testing.assert_array_equal(spmm(from_dense(A), np.eye(6)), A)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 1\)"):
            spmm(sparse.zeros(2, 3), np.ones((4, 1)))


class TestTranspose:
    def test_single_entry(self):
        S = csr_from_coo([(0, 2, 5.0)], 2, 3)
        T = transpose(S)
        assert T.shape == (3, 2)
        assert list(T.triplets()) == [(2, 0, 5.0)]

    def test_symmetric_fixed_point(self):
        A = np.array([[1.0, 2.0, 0.0], [2.0, 0.0, 3.0], [0.0, 3.0, 4.0]])
        S = from_dense(A)
        assert transpose(S) == S

    @pytest.mark.parametrize("seed", range(5))
    def test_double_transpose_bit_identical(self, seed):
        S = from_dense(random_sparse(np.random.default_rng(seed), 6, 4))
        TT = transpose(transpose(S))
        validate(TT)
        for name in ("row_offsets", "col_indices", "values"):
            assert getattr(TT, name).tobytes() == getattr(S, name).tobytes()


class TestNormalize:
    def test_row(self):
        out = normalize(from_dense(np.array([[2.0, 2.0], [0.0, 4.0]])), "row")
        np.testing.assert_array_equal(out.toarray(), [[0.5, 0.5], [0.0, 1.0]])

    def test_sym_unit_degrees_unchanged(self):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(normalize(from_dense(A), "sym").toarray(), A)

    def test_sym_rectangular_matches_loop_oracle(self):
        A = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 2.0]])
        got = normalize(from_dense(A), "sym").toarray()
        assert np.max(np.abs(got - normalize_dense(A, "sym"))) <= 1e-12

    def test_raw_is_copy(self):
        S = from_dense(np.array([[1.0, 3.0]]))
        assert normalize(S, "raw") == S

    @pytest.mark.parametrize("seed", range(5))
    def test_row_sums_and_idempotence(self, seed):
        A = random_sparse(np.random.default_rng(seed), 7, 5, density=0.4)
        R = normalize(from_dense(A), "row")
        sums = R.row_sums()
        nonzero = A.sum(axis=1) > 0
        assert np.all(np.abs(sums[nonzero] - 1.0) <= 1e-12)
        assert np.max(np.abs(normalize(R, "row").toarray() - R.toarray())) <= 1e-12

    def test_zero_degree_rows_survive(self):
        A = np.array([[0.0, 0.0], [0.0, 3.0]])
        for mode in ("row", "sym"):
            out = normalize(from_dense(A), mode).toarray()
            assert np.all(np.isfinite(out))
            assert out[0].sum() == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            normalize(from_dense(np.array([[1.0, -1.0]])), "row")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            normalize(identity(2), "l2")


class TestValidation:
    def test_rejects_unsorted_columns(self):
        with pytest.raises(SparseFormatError):
            sparse.SparseMatrix(1, 3, np.array([0, 2]), np.array([2, 0]), np.array([1.0, 1.0]))

    def test_rejects_explicit_zero(self):
        with pytest.raises(SparseFormatError):
            sparse.SparseMatrix(1, 1, np.array([0, 1]), np.array([0]), np.array([0.0]))

    @settings(max_examples=25)
    @given(triplet_lists())
    def test_stack_preserves_canonical_form(self, case):
        trip, n_rows, n_cols = case
        S = csr_from_coo(trip, n_rows, n_cols)
        validate(sparse.hstack([S, S]))
        validate(sparse.vstack([S, transpose(transpose(S))]))
