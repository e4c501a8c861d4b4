"""Typed heterogeneous graph-convolution architectures.

An architecture is a chain of graph layers written as tokens joined by
``-`` (``"F-X"``, ``"X-TX-X"``).  Each token fixes which graph the layer
aggregates with and which entity type it consumes and produces:

=====  ========  =========  ==========================================
token  input     output     graph
=====  ========  =========  ==========================================
F      word      word       PMI word-word graph
X      word      doc        TF-IDF document-word graph
TX     doc       word       transposed TF-IDF graph
N      doc       doc        kNN document graph
I      doc       doc        identity (plain softmax/linear layer)
A      node      node       TextGCN block adjacency over words+docs
=====  ========  =========  ==========================================

``"fuse(F,TX)-X"`` runs two word-producing branches, combines their outputs
(sum or concat) and feeds the result to the remaining chain.

Layer ``l`` computes ``act(G_l @ dropout(E_in) @ W_l)``; hidden layers use
ReLU (identity in simplified mode) and the last layer is a softmax.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import sparse
from .sparse import normalize, spmm, transpose

ENTITY_OF = {
    "F": ("word", "word"),
    "X": ("word", "doc"),
    "TX": ("doc", "word"),
    "N": ("doc", "doc"),
    "I": ("doc", "doc"),
    "A": ("node", "node"),
}
INPUT_MODES = ("onehot", "X_features", "external")
COMBINES = ("sum", "concat")


class ArchitectureError(ValueError):
    """Incompatible or malformed architecture."""


@dataclass(frozen=True)
class LayerSpec:
    graph_token: str
    activation: str

    @property
    def in_entity(self):
        return ENTITY_OF[self.graph_token][0]

    @property
    def out_entity(self):
        return ENTITY_OF[self.graph_token][1]


@dataclass(frozen=True)
class ArchitectureSpec:
    """Parsed architecture.

    ``layers`` is the trunk; ``branches`` (possibly empty) are the fused
    word-level branches that feed it.
    """

    layers: tuple
    branches: tuple = ()
    combine: str = "sum"
    input_mode: str = "onehot"
    hidden_dim: int = 200
    simplified: bool = False

    @property
    def name(self):
        trunk = "-".join(l.graph_token for l in self.layers)
        if not self.branches:
            return trunk
        inner = ",".join("-".join(l.graph_token for l in b) for b in self.branches)
        return f"fuse({inner})-{trunk}"

    @property
    def chains(self):
        """Every weight-bearing chain: branches first, then the trunk."""
        return (*self.branches, self.layers)

    @property
    def all_layers(self):
        return tuple(l for chain in self.chains for l in chain)

    @property
    def input_entities(self):
        heads = self.branches if self.branches else (self.layers,)
        return tuple(chain[0].in_entity for chain in heads)

    @property
    def first_layer_indices(self):
        """Flat indices of the weights applied directly to the input embeddings."""
        out, pos = [], 0
        heads = self.branches if self.branches else (self.layers,)
        for chain in heads:
            out.append(pos)
            pos += len(chain)
        return tuple(out)

    @property
    def output_entity(self):
        return self.layers[-1].out_entity


def _parse_chain(text, where):
    tokens = [t.strip() for t in text.split("-")]
    if not tokens or any(not t for t in tokens):
        raise ArchitectureError(f"empty layer token in {where!r}")
    for t in tokens:
        if t not in ENTITY_OF:
            raise ArchitectureError(
                f"unknown layer token {t!r} in {where!r}; expected one of {sorted(ENTITY_OF)}"
            )
    return tokens


def parse_architecture(text, input_mode="onehot", hidden_dim=200, simplified=False, combine="sum"):
    """Parse an architecture string such as ``"X-TX-X"`` or ``"fuse(F,TX)-X"``."""
    text = text.replace(" ", "")
    branches = ()
    m = re.fullmatch(r"fuse\(([^()]*)\)-(.+)", text)
    if m:
        parts = m.group(1).split(",")
        if len(parts) < 2:
            raise ArchitectureError("fuse(...) needs at least two branches")
        branches = tuple(
            tuple(LayerSpec(t, "relu") for t in _parse_chain(p, text)) for p in parts
        )
        trunk = _parse_chain(m.group(2), text)
    elif text.startswith("fuse"):
        raise ArchitectureError(f"malformed fuse expression {text!r}")
    else:
        trunk = _parse_chain(text, text)
    layers = tuple(
        LayerSpec(t, "softmax" if i == len(trunk) - 1 else "relu") for i, t in enumerate(trunk)
    )
    spec = ArchitectureSpec(layers, branches, combine, input_mode, int(hidden_dim), bool(simplified))
    return validate_architecture(spec)


def validate_architecture(a):
    """Check entity compatibility along every chain.

    Returns ``a`` unchanged; raises :class:`ArchitectureError` naming the
    offending positions.
    """
    if not a.layers:
        raise ArchitectureError("architecture has no layers")
    if a.input_mode not in INPUT_MODES:
        raise ArchitectureError(f"input_mode must be one of {INPUT_MODES}")
    if a.combine not in COMBINES:
        raise ArchitectureError(f"combine must be one of {COMBINES}")
    if a.hidden_dim < 1:
        raise ArchitectureError("hidden_dim must be positive")
    for ci, chain in enumerate(a.chains):
        trunk = ci == len(a.chains) - 1
        for i, layer in enumerate(chain):
            last = trunk and i == len(chain) - 1
            if layer.activation == "softmax" and not last:
                raise ArchitectureError(f"softmax layer {layer.graph_token} at position {i} is not the final layer")
            if last and layer.activation != "softmax":
                raise ArchitectureError("final layer must be a softmax layer")
        for i in range(len(chain) - 1):
            prev, nxt = chain[i], chain[i + 1]
            if prev.out_entity != nxt.in_entity:
                raise ArchitectureError(
                    f"layer {i} ({prev.graph_token}: outputs {prev.out_entity}) cannot feed "
                    f"layer {i + 1} ({nxt.graph_token}: consumes {nxt.in_entity})"
                )
    if a.output_entity not in ("doc", "node"):
        raise ArchitectureError("final layer must produce document outputs")
    if a.branches:
        ends = {b[-1].out_entity for b in a.branches}
        if len(ends) != 1 or ends.pop() != a.layers[0].in_entity:
            raise ArchitectureError(
                f"fused branches must all produce {a.layers[0].in_entity} embeddings for the trunk"
            )
    if a.input_mode == "X_features" and "node" in a.input_entities:
        raise ArchitectureError("X_features input is not defined for block-adjacency layers")
    return a


def entity_sizes(n, m):
    return {"doc": n, "word": m, "node": n + m}


def weight_shapes(a, n, m, k, input_dims=None):
    """Weight shapes in flat order (branches, then trunk).

    ``input_dims`` maps an input entity to its feature width for
    ``X_features``/``external`` inputs; one-hot inputs use the entity count.
    """
    sizes = entity_sizes(n, m)
    d = a.hidden_dim
    shapes = []

    def head_dim(entity):
        if a.input_mode == "onehot":
            return sizes[entity]
        if a.input_mode == "X_features":
            return m if entity == "doc" else n
        if not input_dims or entity not in input_dims:
            raise ArchitectureError("external input mode needs the external embedding dimension")
        return int(input_dims[entity])

    for chain in a.branches:
        fan_in = head_dim(chain[0].in_entity)
        for _ in chain:
            shapes.append((fan_in, d))
            fan_in = d
    fan_in = (d * len(a.branches) if a.combine == "concat" else d) if a.branches else head_dim(a.layers[0].in_entity)
    for i, _ in enumerate(a.layers):
        out = k if i == len(a.layers) - 1 else d
        shapes.append((fan_in, out))
        fan_in = out
    return shapes


def param_count(a, n, m, k, input_dims=None):
    return sum(r * c for r, c in weight_shapes(a, n, m, k, input_dims))


@dataclass
class ModelParams:
    weights: list
    seed: int = 0

    def copy(self):
        return ModelParams([w.copy() for w in self.weights], self.seed)


def init_params(a, n, m, k, seed=0, input_dims=None):
    """Glorot-uniform weights, reproducible for a given seed."""
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in weight_shapes(a, n, m, k, input_dims):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    return ModelParams(weights, seed)


class ModelGraphs:
    """Normalized graphs (and their transposes) for one normalization mode.

    ``inputs`` optionally maps an entity to a user-supplied input matrix
    (dense array or :class:`SparseMatrix`) for external input mode.
    """

    def __init__(self, graphs, normalization="row", adjacency=None, inputs=None):
        self.graphs = graphs
        self.normalization = normalization
        self.adjacency = adjacency
        self.inputs = dict(inputs or {})
        self.n = graphs.X.n_rows if graphs is not None else None
        self.m = graphs.X.n_cols if graphs is not None else None
        self._cache = {}

    @classmethod
    def from_features(cls, features, normalization="raw"):
        """Graph-free setup for linear classifiers over precomputed doc features."""
        mg = cls(None, normalization, inputs={"doc": features})
        mg.n = features.shape[0] if not isinstance(features, sparse.SparseMatrix) else features.n_rows
        mg.m = 0
        return mg

    def matrix(self, token):
        if token not in self._cache:
            mode = self.normalization
            if token == "X":
                M = normalize(self.graphs.X, mode)
            elif token == "TX":
                M = normalize(transpose(self.graphs.X), mode)
            elif token == "F":
                M = normalize(self.graphs.F, mode)
            elif token == "N":
                if self.graphs.N is None:
                    raise ArchitectureError("architecture uses N but no kNN graph was built")
                M = normalize(self.graphs.N, mode)
            elif token == "I":
                M = sparse.identity(self.n)
            elif token == "A":
                if self.adjacency is None:
                    raise ArchitectureError("architecture uses A but no block adjacency was supplied")
                M = normalize(self.adjacency, mode)
            else:
                raise KeyError(token)
            self._cache[token] = M
        return self._cache[token]

    def matrix_t(self, token):
        key = ("T", token)
        if key not in self._cache:
            self._cache[key] = transpose(self.matrix(token))
        return self._cache[key]

    def sizes(self):
        return entity_sizes(self.n, self.m)

    def input_for(self, a, entity):
        """First-layer input: ``("identity", size)`` or ``("sparse"|"dense", matrix)``."""
        if a.input_mode == "onehot":
            return ("identity", self.sizes()[entity])
        if a.input_mode == "X_features":
            M = self.matrix("X") if entity == "doc" else self.matrix("TX")
            return ("sparse", M)
        if entity not in self.inputs:
            raise ArchitectureError(f"external input mode needs an input matrix for {entity!r}")
        M = self.inputs[entity]
        if isinstance(M, sparse.SparseMatrix):
            return ("sparse", M)
        return ("dense", np.asarray(M, dtype=np.float64))

    def input_dims(self):
        return {
            e: (M.n_cols if isinstance(M, sparse.SparseMatrix) else np.asarray(M).shape[1])
            for e, M in self.inputs.items()
        }


@dataclass
class LayerRecord:
    token: str
    kind: str
    source: object
    mask: object
    Z: np.ndarray
    out: np.ndarray


@dataclass
class ForwardTrace:
    records: list = field(default_factory=list)
    branch_outputs: list = field(default_factory=list)
    combined: object = None
    logits: np.ndarray = None
    probs: np.ndarray = None

    @property
    def word_embeddings(self):
        """Word-level input of the final layer (eval-mode stored embeddings)."""
        return self.records[-1].source if self.records[-1].kind == "dense" else None


def softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def log_softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


def _apply_dropout(kind, source, p, rng):
    """Return ``(dropped_source, mask)``; the mask already includes 1/(1-p)."""
    if p <= 0 or rng is None:
        return source, None
    keep = 1.0 - p
    if kind == "identity":
        mask = (rng.random(source) < keep) / keep
        return source, mask
    if kind == "sparse":
        mask = (rng.random(source.nnz) < keep) / keep
        vals = source.values * mask
        # zeros introduced by the mask are kept so the sparsity pattern matches the mask
        return sparse.SparseMatrix(source.n_rows, source.n_cols, source.row_offsets, source.col_indices, vals, check=False), mask
    mask = (rng.random(source.shape) < keep) / keep
    return source * mask, mask


def forward(a, params, mg, dropout=0.0, training=False, rng=None):
    """Run the network and return a :class:`ForwardTrace`.

    In training mode with ``dropout > 0`` masks are drawn from ``rng``; the
    one-hot first layer realizes dropout as a row mask on its weight lookup.
    """
    if not 0 <= dropout < 1:
        raise ValueError("dropout must be in [0, 1)")
    use_rng = rng if (training and dropout > 0) else None
    trace = ForwardTrace()
    weights = iter(params.weights)
    sizes = mg.sizes()

    def run_chain(chain, kind, source, is_trunk):
        for i, layer in enumerate(chain):
            W = next(weights)
            pos = len(trace.records)
            if kind == "identity":
                rows, width = source, source
            elif kind == "sparse":
                rows, width = source.n_rows, source.n_cols
            else:
                rows, width = source.shape
            if rows != sizes[layer.in_entity] or width != W.shape[0]:
                raise ArchitectureError(
                    f"layer {pos} ({layer.graph_token}): input is {rows}x{width}, expected "
                    f"{sizes[layer.in_entity]} {layer.in_entity} rows and width {W.shape[0]}"
                )
            final = is_trunk and i == len(chain) - 1
            relu = not final and not a.simplified
            dsrc, mask = _apply_dropout(kind, source, dropout, use_rng)
            G = mg.matrix(layer.graph_token)
            if kind == "identity":
                T = W if mask is None else W * mask[:, None]
            elif kind == "sparse":
                T = spmm(dsrc, W)
            else:
                T = dsrc @ W
            Z = spmm(G, T)
            out = np.maximum(Z, 0.0) if relu else Z
            trace.records.append(LayerRecord(layer.graph_token, kind, dsrc, mask, Z, out))
            kind, source = "dense", out
        return source

    if a.branches:
        for chain in a.branches:
            kind, src = mg.input_for(a, chain[0].in_entity)
            trace.branch_outputs.append(run_chain(chain, kind, src, False))
        if a.combine == "sum":
            combined = np.sum(trace.branch_outputs, axis=0)
        else:
            combined = np.hstack(trace.branch_outputs)
        trace.combined = combined
        logits = run_chain(a.layers, "dense", combined, True)
    else:
        kind, src = mg.input_for(a, a.layers[0].in_entity)
        logits = run_chain(a.layers, kind, src, True)
    trace.logits = logits
    trace.probs = softmax(logits)
    return trace


def backward(a, params, mg, trace, dlogits):
    """Gradients of a scalar loss w.r.t. every weight, given ``dL/dlogits``."""
    grads = [None] * len(params.weights)
    records = trace.records
    chains = a.chains
    # flat index ranges per chain
    bounds, pos = [], 0
    for chain in chains:
        bounds.append((pos, pos + len(chain)))
        pos += len(chain)

    def run_back(ci, dout):
        start, stop = bounds[ci]
        chain = chains[ci]
        is_trunk = ci == len(chains) - 1
        for li in range(stop - 1, start - 1, -1):
            rec = records[li]
            layer = chain[li - start]
            W = params.weights[li]
            final = is_trunk and li == stop - 1
            if final or a.simplified:
                dZ = dout
            else:
                dZ = dout * (rec.Z > 0)
            dT = spmm(mg.matrix_t(layer.graph_token), dZ)
            if rec.kind == "identity":
                grads[li] = dT if rec.mask is None else dT * rec.mask[:, None]
                return None
            if rec.kind == "sparse":
                grads[li] = spmm(transpose(rec.source), dT)
                return None
            grads[li] = rec.source.T @ dT
            dsrc = dT @ W.T
            if rec.mask is not None:
                dsrc = dsrc * rec.mask
            dout = dsrc
            if li == start and not (is_trunk and a.branches):
                # external dense input: no gradient flows further
                return None
        return dout

    dcombined = run_back(len(chains) - 1, dlogits)
    if a.branches:
        d = a.hidden_dim
        for bi in range(len(a.branches)):
            if a.combine == "sum":
                dbranch = dcombined
            else:
                dbranch = dcombined[:, bi * d:(bi + 1) * d]
            run_back(bi, dbranch)
    return grads


def output_doc_rows(a, mg):
    """Row offset of document rows in the network output."""
    return mg.m if a.output_entity == "node" else 0


def with_options(a, **kwargs):
    return validate_architecture(replace(a, **kwargs))
