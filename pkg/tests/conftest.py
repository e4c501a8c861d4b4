import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hetegcn.corpus import SplitSet, from_records  # noqa: E402

CLASS_WORDS = {
    "autos": ["engine", "motor", "wheel", "brake", "fuel"],
    "space": ["moon", "orbit", "shuttle", "rocket", "launch"],
}
SHARED = ["the", "report", "new", "said", "today", "week"]


def separable_records(n_docs=20, seed=0):
    """Two-class corpus where each class owns its vocabulary."""
    rng = np.random.default_rng(seed)
    names = list(CLASS_WORDS)
    recs = []
    for i in range(n_docs):
        label = names[i % 2]
        toks = list(rng.choice(CLASS_WORDS[label], 4)) + list(rng.choice(SHARED, 6))
        rng.shuffle(toks)
        recs.append((f"d{i:02d}", label, toks))
    return recs


def random_records(n_docs, n_words, n_classes, seed, min_len=3, max_len=12):
    rng = np.random.default_rng(seed)
    words = [f"w{j}" for j in range(n_words)]
    recs = []
    for i in range(n_docs):
        length = int(rng.integers(min_len, max_len + 1))
        toks = [words[j] for j in rng.integers(0, n_words, size=length)]
        recs.append((f"doc{i}", f"c{i % n_classes}", toks))
    return recs


@pytest.fixture
def separable():
    c = from_records(separable_records())
    split = SplitSet(c.doc_ids[:12], c.doc_ids[12:16], c.doc_ids[16:])
    return c, split


@pytest.fixture
def tiny():
    """6 documents, 8 words, 3 classes."""
    rng = np.random.default_rng(3)
    words = list("abcdefgh")
    recs = []
    for i in range(6):
        toks = list(words) if i == 0 else list(rng.choice(words, size=7))
        recs.append((f"d{i}", f"c{i % 3}", toks))
    c = from_records(recs)
    split = SplitSet(("d0", "d1", "d3", "d4"), ("d2",), ("d5",))
    return c, split


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(pytestconfig):
    """``criterion(n, title, ok, detail)`` records and prints one result line, then asserts."""

    def record(number, title, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        line = f"{status} criterion {number}: {title}" + (f" ({detail})" if detail else "")
        pytestconfig.stash[ACCEPTANCE].append(line)
        print(line)
        assert ok, line

    def skip(number, title, reason):
        line = f"SKIP criterion {number}: {title} ({reason})"
        pytestconfig.stash[ACCEPTANCE].append(line)
        pytest.skip(line)

    record.skip = skip
    return record
