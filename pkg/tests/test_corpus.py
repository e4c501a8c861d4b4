from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetegcn.corpus import (CorpusError, SplitSet, from_records, load_corpus, load_split,
                            preprocess, save_split, split_small_label, split_standard,
                            stratified_count, write_corpus)


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def labeled_corpus(sizes):
    """Corpus with ``sizes[label]`` single-token documents per label."""
    recs = []
    for label, n in sizes.items():
        recs += [(f"{label}{i}", label, ["tok"]) for i in range(n)]
    return from_records(recs)


class TestLoadCorpus:
    def test_labels_by_first_appearance(self, tmp_path):
        c = load_corpus(write_lines(tmp_path / "c.tsv", ["d1\tpos\tgood film", "d2\tneg\tbad film"]))
        assert c.n_classes == 2
        assert c.label_names == ("pos", "neg")
        assert c.labels.tolist() == [0, 1]

    def test_duplicate_id_names_it(self, tmp_path):
        path = write_lines(tmp_path / "c.tsv", ["d1\ta\tx", "d2\ta\ty", "d1\tb\tz"])
        with pytest.raises(CorpusError, match=r"3.*'d1'"):
            load_corpus(path)

    def test_wrong_field_count_names_line(self, tmp_path):
        path = write_lines(tmp_path / "c.tsv", ["d1\ta\tx", "d2\ta"])
        with pytest.raises(CorpusError, match=":2:"):
            load_corpus(path)

    def test_empty_tokens(self, tmp_path):
        with pytest.raises(CorpusError, match=":1:"):
            load_corpus(write_lines(tmp_path / "c.tsv", ["d1\ta\t  "]))

    def test_vocab_is_dense(self, tmp_path):
        lines = ["d1\ta\tp q", "d2\ta\tq r", "d3\tb\ts t", "d4\tb\tu p", "d5\ta\tv"]
        c = load_corpus(write_lines(tmp_path / "c.tsv", lines))
        assert c.n_words == 7
        assert sorted(int(t) for d in c.docs for t in d) == sorted(
            c.token_id(t) for line in lines for t in line.split("\t")[2].split())
        assert set(np.concatenate(c.docs).tolist()) == set(range(7))

    def test_write_round_trip(self, tmp_path, separable):
        c, _ = separable
        write_corpus(c, tmp_path / "out.tsv")
        again = load_corpus(tmp_path / "out.tsv")
        assert again.doc_ids == c.doc_ids
        assert [again.tokens(i) for i in range(again.n_docs)] == [c.tokens(i) for i in range(c.n_docs)]


class TestPreprocess:
    def test_min_count_removes_rare_token(self):
        docs = [["rare", "x", "x"], ["rare", "x", "x"], ["rare", "x"], ["rare", "x"]]
        c = from_records([(f"d{i}", "a", t) for i, t in enumerate(docs)])
        out = preprocess(c, min_count=5)
        assert "rare" not in out.vocab
        assert "x" in out.vocab

    def test_skip_filtering_is_identity(self, separable):
        c, _ = separable
        assert preprocess(c, stopwords={"the"}, min_count=100, skip_filtering=True) is c

    @pytest.mark.parametrize("min_count, vocab, n_docs", [(2, {"a", "b"}, 2), (3, {"a"}, 1)])
    def test_hand_counted_example(self, min_count, vocab, n_docs):
        c = from_records([("d1", "x", "a a a a a b".split()), ("d2", "y", ["b"])])
        out = preprocess(c, min_count=min_count)
        assert set(out.vocab) == vocab
        assert out.n_docs == n_docs
        if n_docs == 1:
            assert out.dropped == ("d2",)

    def test_stopwords_removed(self, separable):
        c, _ = separable
        out = preprocess(c, stopwords={"the", "said"}, min_count=0)
        assert "the" not in out.vocab and "said" not in out.vocab

    @settings(max_examples=30)
    @given(st.lists(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=8), min_size=1, max_size=8),
           st.sets(st.sampled_from("abcdefg")), st.integers(0, 4))
    def test_filter_order_independent(self, docs, stop, min_count):
        c = from_records([(f"d{i}", "a", t) for i, t in enumerate(docs)])
        joint = preprocess(c, stopwords=stop, min_count=min_count)
        seq = preprocess(preprocess(c, min_count=min_count), stopwords=stop, min_count=0)
        assert joint.vocab == seq.vocab
        assert joint.doc_ids == seq.doc_ids
        assert all(np.array_equal(x, y) for x, y in zip(joint.docs, seq.docs))

    def test_vocab_redensified(self):
        c = from_records([("d1", "a", "p q q r r r".split())])
        out = preprocess(c, min_count=2)
        assert out.vocab == ("q", "r")
        assert set(out.docs[0].tolist()) == {0, 1}


class TestSplitStandard:
    @pytest.fixture
    def hundred(self):
        return labeled_corpus({"a": 60, "b": 60})

    def test_sizes(self, hundred):
        test = hundred.doc_ids[:20]
        s = split_standard(hundred, test, 0.1, seed=0)
        assert (len(s.train), len(s.val), len(s.test)) == (90, 10, 20)

    def test_deterministic(self, hundred):
        assert split_standard(hundred, (), 0.1, 7) == split_standard(hundred, (), 0.1, 7)

    def test_seed_changes_split(self, hundred):
        assert set(split_standard(hundred, (), 0.1, 0).val) != set(split_standard(hundred, (), 0.1, 1).val)

    def test_unknown_test_id(self, hundred):
        with pytest.raises(CorpusError, match="nope"):
            split_standard(hundred, ("nope",), 0.1)

    def test_stratified_option(self):
        c = labeled_corpus({"a": 80, "b": 20})
        s = split_standard(c, (), 0.1, seed=0, stratified=True)
        got = Counter(c.label_names[c.labels[c.doc_index(d)]] for d in s.val)
        assert got == {"a": 8, "b": 2}

    def test_disjointness_enforced(self):
        with pytest.raises(CorpusError):
            SplitSet(("a", "b"), ("b",), ())

    def test_json_round_trip(self, tmp_path, hundred):
        s = split_standard(hundred, hundred.doc_ids[:5], 0.2, 3)
        save_split(s, tmp_path / "s.json")
        assert load_split(tmp_path / "s.json") == s


class TestSmallLabel:
    def test_proportional(self):
        c = labeled_corpus({"A": 100, "B": 100})
        base = SplitSet(c.doc_ids, (), ())
        (s,) = split_small_label(base, c, fractions=[10], repeats=1)
        got = Counter(c.label_names[c.labels[c.doc_index(d)]] for d in s.train)
        assert got == {"A": 10, "B": 10}

    def test_minimum_one_rule(self):
        c = labeled_corpus({"A": 300, "B": 3})
        base = SplitSet(c.doc_ids, (), ())
        (s,) = split_small_label(base, c, fractions=[1], repeats=1)
        got = Counter(c.label_names[c.labels[c.doc_index(d)]] for d in s.train)
        assert got == {"A": 3, "B": 1}

    def test_nested_per_repeat(self):
        c = labeled_corpus({"A": 150, "B": 80, "C": 40})
        base = SplitSet(c.doc_ids[:-10], (), c.doc_ids[-10:])
        splits = split_small_label(base, c, fractions=(1, 5, 10, 20), repeats=5, seed=3)
        assert len(splits) == 20
        for r in range(5):
            chain = [set(s.train) for s in splits[4 * r: 4 * r + 4]]
            assert all(small <= big for small, big in zip(chain, chain[1:]))
            assert all(s.test == base.test and s.repeat_index == r for s in splits[4 * r: 4 * r + 4])

    def test_proportions_within_one(self):
        sizes = {"A": 137, "B": 59, "C": 8}
        c = labeled_corpus(sizes)
        base = SplitSet(c.doc_ids, (), ())
        for s in split_small_label(base, c, fractions=(1, 5, 10, 20), repeats=2):
            got = Counter(c.label_names[c.labels[c.doc_index(d)]] for d in s.train)
            for label, n in sizes.items():
                assert abs(got[label] - max(1, s.label_fraction / 100 * n)) <= 1

    def test_class_without_train_docs(self):
        c = labeled_corpus({"A": 5, "B": 5})
        base = SplitSet(c.doc_ids[:5], (), c.doc_ids[5:])
        with pytest.raises(CorpusError, match="'B'"):
            split_small_label(base, c, fractions=[10], repeats=1)

    def test_deterministic(self):
        c = labeled_corpus({"A": 50, "B": 50})
        base = SplitSet(c.doc_ids, (), ())
        assert split_small_label(base, c, seed=4) == split_small_label(base, c, seed=4)

    @pytest.mark.parametrize("fraction, size, expected", [(1, 300, 3), (1, 3, 1), (5, 30, 2), (10, 25, 3)])
    def test_rounding(self, fraction, size, expected):
        assert stratified_count(fraction, size) == expected
