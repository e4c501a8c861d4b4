import math

import numpy as np
import pytest

from conftest import random_records
from hetegcn.corpus import SplitSet, from_records
from hetegcn.graphs import build_graphs, build_knn, build_pmi, build_tfidf, load_graphs, save_graphs
from hetegcn.sparse import from_dense, transpose
from oracles import knn_dense, pmi_dense, tfidf_dense

TOL = 1e-12


def corpus_of(*texts):
    return from_records([(f"d{i}", "x", t.split()) for i, t in enumerate(texts)])


def random_corpus(seed):
    rng = np.random.default_rng(seed)
    return from_records(random_records(int(rng.integers(4, 15)), int(rng.integers(3, 12)), 2, seed,
                                       max_len=int(rng.integers(3, 30))))


def as_lists(c):
    return [d.tolist() for d in c.docs]


class TestTfidf:
    def test_hand_counted(self):
        c = corpus_of("a a b", "b c")
        X, idf = build_tfidf(c)
        a, b = c.token_id("a"), c.token_id("b")
        assert X.toarray()[0, a] == pytest.approx(2 * math.log(2))
        assert idf[b] == 0.0
        assert X.toarray()[0, b] == 0.0
        assert all(col != b for _, col, _ in X.triplets())

    def test_single_document_is_empty(self):
        X, idf = build_tfidf(corpus_of("a b b c"))
        assert X.nnz == 0
        assert np.all(idf == 0)

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_counting_oracle(self, seed):
        c = random_corpus(seed)
        X, idf = build_tfidf(c)
        Xo, idfo = tfidf_dense(as_lists(c), as_lists(c), c.n_words)
        assert np.max(np.abs(X.toarray() - Xo)) <= TOL
        assert np.max(np.abs(idf - idfo)) <= TOL
        assert np.all(X.values > 0)


class TestPmi:
    def test_ln_one_and_a_half(self):
        c = corpus_of("a b", "a b", "c")
        F = build_pmi(c, window=20).toarray()
        a, b = c.token_id("a"), c.token_id("b")
        assert F[a, b] == F[b, a]
        assert F[a, b] == pytest.approx(math.log(1.5), abs=1e-12)
        np.testing.assert_array_equal(np.diag(F), 1.0)

    def test_zero_pmi_dropped(self):
        c = corpus_of("a b", "a c")
        F = build_pmi(c, window=20).toarray()
        assert F[c.token_id("a"), c.token_id("b")] == 0.0

    def test_window_must_be_positive(self):
        with pytest.raises(ValueError):
            build_pmi(corpus_of("a b"), window=0)

    @pytest.mark.parametrize("seed", range(25))
    @pytest.mark.parametrize("window", [1, 3, 20])
    def test_matches_window_oracle(self, seed, window):
        c = random_corpus(seed)
        F = build_pmi(c, window=window)
        Fo, *_ = pmi_dense(as_lists(c), c.n_words, window)
        assert np.max(np.abs(F.toarray() - Fo)) <= TOL
        assert transpose(F) == F
        off = [v for r, k, v in F.triplets() if r != k]
        assert all(v > 0 for v in off)


class TestKnn:
    def test_basis_rows(self):
        X = from_dense(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        N = build_knn(X, knn=1).toarray()
        np.testing.assert_array_equal(N, [[1, 1, 0], [1, 1, 0], [0, 0, 1]])

    def test_zero_row_only_self_loop(self):
        X = from_dense(np.array([[1.0, 1.0], [0.0, 0.0], [1.0, 0.0]]))
        N = build_knn(X, knn=2).toarray()
        np.testing.assert_array_equal(N[1], [0, 1, 0])

    def test_ties_prefer_lower_index(self):
        X = from_dense(np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]))
        N = build_knn(X, knn=1).toarray()
        # row 3 ties among 0, 1, 2 and picks 0
        assert N[3, 0] == 1 and N[3, 1] == 0 and N[3, 2] == 0

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_brute_force(self, seed):
        c = random_corpus(seed + 100)
        X, _ = build_tfidf(c)
        k = 1 + seed % 4
        N = build_knn(X, knn=k)
        assert np.max(np.abs(N.toarray() - knn_dense(X.toarray(), k))) <= TOL
        assert transpose(N) == N
        np.testing.assert_array_equal(np.diag(N.toarray()), 1.0)
        # a hub row can exceed 1 + 2k after symmetrization; the total cannot
        assert N.nnz <= N.n_rows * (1 + 2 * k)

    def test_hub_row_exceeds_per_row_bound(self):
        # every spoke's nearest neighbour is the hub
        X = from_dense(np.vstack([np.ones(6), np.ones((6, 6)) + np.eye(6)]))
        N = build_knn(X, knn=1)
        assert N.row_nnz()[0] > 1 + 2 * 1

    def test_ten_docs_knn3(self):
        rng = np.random.default_rng(0)
        A = rng.random((10, 6)) * (rng.random((10, 6)) < 0.5)
        N = build_knn(from_dense(A), knn=3)
        assert np.max(np.abs(N.toarray() - knn_dense(A, 3))) <= TOL


class TestBuildGraphs:
    @pytest.fixture
    def six(self):
        texts = ["a b c", "a b", "a d", "b e", "a z", "z q"]
        c = corpus_of(*texts)
        return c, SplitSet(("d0", "d1", "d2", "d3"), ("d4",), ("d5",))

    def test_transductive_covers_all(self, six):
        c, split = six
        g = build_graphs(c, split, knn=2)
        assert g.doc_ids == c.doc_ids
        assert g.X.shape == (6, c.n_words)
        assert g.F.shape == (c.n_words, c.n_words)

    def test_inductive_drops_unseen_words(self, six):
        c, split = six
        g = build_graphs(c, split, knn=2, mode="inductive")
        assert "z" not in g.vocab and "q" not in g.vocab
        assert g.X.shape[1] == len(g.vocab) == g.F.shape[0]
        assert "d5" not in g.doc_ids

    def test_inductive_idf_uses_train_only(self, six):
        c, split = six
        ind = build_graphs(c, split, knn=2, mode="inductive")
        tra = build_graphs(c, split, knn=2)
        # df(a): 3 of 4 train docs vs 4 of 6 overall
        assert ind.idf[ind.vocab.index("a")] == pytest.approx(math.log(4 / 3))
        assert tra.idf[tra.vocab.index("a")] == pytest.approx(math.log(6 / 4))

    def test_inductive_equals_transductive_when_train_is_everything(self, separable):
        c, _ = separable
        everything = SplitSet(c.doc_ids, (), ())
        ind = build_graphs(c, everything, knn=3, mode="inductive")
        tra = build_graphs(c, everything, knn=3)
        assert ind.X == tra.X and ind.F == tra.F

    def test_save_load_round_trip(self, tmp_path, separable):
        c, split = separable
        g = build_graphs(c, split, knn=3)
        save_graphs(g, tmp_path / "g")
        h = load_graphs(tmp_path / "g")
        assert h.X == g.X and h.F == g.F and h.N == g.N
        assert h.vocab == g.vocab and h.doc_ids == g.doc_ids
        assert h.idf.tobytes() == g.idf.tobytes()
