"""Heterogeneous graph convolutional networks for text classification."""

from .corpus import Corpus, SplitSet, load_corpus, preprocess, split_small_label, split_standard
from .estimator import HeteGCNClassifier, TfidfGraphVectorizer
from .graphs import GraphSet, build_graphs, build_knn, build_pmi, build_tfidf
from .metrics import macro_f1, micro_f1
from .model import ArchitectureError, ModelGraphs, forward, init_params, parse_architecture
from .sparse import SparseMatrix, csr_from_coo, normalize, spmm, transpose
from .trainer import TrainConfig, adam_step, loss_and_gradients, sweep, train

__version__ = "0.1.0"
