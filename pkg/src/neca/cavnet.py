"""Weighted heterogeneous networks over categorical attribute values.

Every (attribute, value) pair observed in a CAD becomes a CAV node.  Two
edge sets are built over the node universe:

* cross-attribute edges weighted by co-occurrence counts, softmax-normalized
  over the whole edge set;
* within-attribute edges weighted by an information-style affinity
  n / (g(u) + g(v)), plus one randomly sampled cross-attribute connectivity
  edge per node (small constant affinity beta) so the network is connected,
  again softmax-normalized over the whole edge set.

The softmax runs over every edge of a network, so raw scores are retained on
each edge and neighborhoods are defined structurally (by edge existence),
never by floating-point weight positivity.  Per-neighborhood renormalization
downstream works from the raw scores, which equals renormalizing the
log-weights without the underflow.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import CAD


class GraphError(Exception):
    """Contract violation while building or querying a network."""


@dataclass(frozen=True)
class CavNode:
    attr: int
    value: int
    token: str


@dataclass
class CavNodeSet:
    """Indexed universe of CAV nodes with occurrence counts."""

    nodes: tuple[CavNode, ...]
    index_of: dict[tuple[int, str], int]
    counts: np.ndarray          # occurrences g(node) in the CAD
    attr_of: np.ndarray         # node id -> attribute index
    attribute_names: tuple[str, ...]

    @property
    def total(self) -> int:
        return len(self.nodes)

    @property
    def n_attributes(self) -> int:
        return len(self.attribute_names)

    def id_for(self, attr: int, token: str) -> int:
        return self.index_of[(attr, token)]

    def qualified(self, node_id: int) -> str:
        node = self.nodes[node_id]
        return f"{self.attribute_names[node.attr]}={node.token}"


def build_node_set(cad: CAD) -> CavNodeSet:
    """One node per (attribute, domain token), attribute-major, domain order."""
    nodes = []
    index_of = {}
    for j, domain in enumerate(cad.domains):
        for l, token in enumerate(domain):
            index_of[(j, token)] = len(nodes)
            nodes.append(CavNode(j, l, token))
    counts = np.zeros(len(nodes), dtype=np.int64)
    for rec in cad.records:
        for j, token in enumerate(rec):
            counts[index_of[(j, token)]] += 1
    attr_of = np.array([nd.attr for nd in nodes], dtype=np.int64)
    return CavNodeSet(tuple(nodes), index_of, counts, attr_of, cad.attribute_names)


def co_occurrence(cad: CAD, u: CavNode, v: CavNode) -> int:
    """Number of records taking u's token and v's token; symmetric in (u, v)."""
    if u.attr == v.attr:
        raise GraphError("co-occurrence requires nodes of different attributes")
    return sum(1 for rec in cad.records if rec[u.attr] == u.token and rec[v.attr] == v.token)


def stable_softmax(raw: np.ndarray) -> np.ndarray:
    """Softmax computed in log-space with max-subtraction (shift-invariant)."""
    shifted = raw - raw.max()
    e = np.exp(shifted)
    return e / e.sum()


WITHIN = 0
CONNECTIVITY = 1

_KIND_NAMES = {None: "inter", WITHIN: "within", CONNECTIVITY: "connectivity"}


@dataclass
class EdgeSet:
    """Undirected edges stored once with u < v, sorted by (u, v)."""

    u: np.ndarray
    v: np.ndarray
    raw: np.ndarray
    weight: np.ndarray
    kind: np.ndarray | None = None   # intra only: WITHIN or CONNECTIVITY

    def __len__(self) -> int:
        return len(self.u)

    def kind_name(self, i: int) -> str:
        return _KIND_NAMES[None if self.kind is None else int(self.kind[i])]


def _finalize_edges(pairs: dict, kinds: dict | None = None) -> EdgeSet:
    order = sorted(pairs)
    u = np.array([p[0] for p in order], dtype=np.int64)
    v = np.array([p[1] for p in order], dtype=np.int64)
    raw = np.array([pairs[p] for p in order], dtype=np.float64)
    kind = None
    if kinds is not None:
        kind = np.array([kinds[p] for p in order], dtype=np.int8)
    return EdgeSet(u, v, raw, stable_softmax(raw), kind)


def build_inter_network(cad: CAD, nodes: CavNodeSet) -> EdgeSet:
    """Cross-attribute edges for every co-occurring value pair.

    Edge weights are the softmax of the co-occurrence counts over the whole
    edge set; raw counts are retained.
    """
    if cad.m < 2:
        raise GraphError("inter network requires >= 2 attributes")
    counts: Counter = Counter()
    for rec in cad.records:
        ids = [nodes.index_of[(j, tok)] for j, tok in enumerate(rec)]
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                x, y = ids[a], ids[b]
                counts[(x, y) if x < y else (y, x)] += 1
    return _finalize_edges(dict(counts))


def intra_affinity(nodes: CavNodeSet, n: int, u: int, v: int, beta: float) -> float:
    """Raw within-network affinity: n/(g(u)+g(v)) same attribute, beta otherwise."""
    if u == v:
        raise GraphError("affinity requires two distinct nodes")
    if nodes.attr_of[u] == nodes.attr_of[v]:
        return n / float(nodes.counts[u] + nodes.counts[v])
    return beta


def build_intra_network(cad: CAD, nodes: CavNodeSet, beta: float = 0.01,
                        seed: int = 0) -> EdgeSet:
    """Within-attribute cliques plus one random connectivity edge per node.

    For each node a foreign attribute is chosen uniformly, then a value node
    within it; duplicate draws collapse to a single edge.  Affinities are
    softmax-normalized over the whole intra edge set.
    """
    if cad.m < 2:
        raise GraphError("intra network requires >= 2 attributes")
    pairs: dict = {}
    kinds: dict = {}
    offsets = np.concatenate([[0], np.cumsum([len(d) for d in cad.domains])])
    for j, domain in enumerate(cad.domains):
        base = offsets[j]
        for a in range(len(domain)):
            for b in range(a + 1, len(domain)):
                key = (base + a, base + b)
                pairs[key] = intra_affinity(nodes, cad.n, *key, beta)
                kinds[key] = WITHIN
    rng = np.random.default_rng(seed)
    for node_id in range(nodes.total):
        j = int(nodes.attr_of[node_id])
        foreign = [jj for jj in range(cad.m) if jj != j]
        jj = foreign[rng.integers(len(foreign))]
        other = int(offsets[jj] + rng.integers(len(cad.domains[jj])))
        key = (node_id, other) if node_id < other else (other, node_id)
        if key not in pairs:
            pairs[key] = beta
            kinds[key] = CONNECTIVITY
    return _finalize_edges(pairs, kinds)


def _adjacency(edges: EdgeSet, num_nodes: int) -> list[np.ndarray]:
    neigh = [[] for _ in range(num_nodes)]
    for a, b in zip(edges.u, edges.v):
        neigh[a].append(b)
        neigh[b].append(a)
    return [np.array(sorted(ns), dtype=np.int64) for ns in neigh]


@dataclass
class HetNet:
    """The two weighted networks over one CAV node set, plus adjacency."""

    node_set: CavNodeSet
    inter: EdgeSet
    intra: EdgeSet
    rng_seed: int
    inter_adj: list[np.ndarray] = field(init=False)
    intra_adj: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        self.inter_adj = _adjacency(self.inter, self.node_set.total)
        self.intra_adj = _adjacency(self.intra, self.node_set.total)

    def edges(self, which: str) -> EdgeSet:
        if which == "inter":
            return self.inter
        if which == "intra":
            return self.intra
        raise GraphError(f"unknown network {which!r}")

    def neighbors(self, which: str, node_id: int) -> np.ndarray:
        return (self.inter_adj if which == "inter" else self.intra_adj)[node_id]

    def directed_pairs(self, which: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Each undirected edge expanded both ways: (target, source, edge index)."""
        e = self.edges(which)
        tgt = np.concatenate([e.u, e.v])
        src = np.concatenate([e.v, e.u])
        idx = np.concatenate([np.arange(len(e)), np.arange(len(e))])
        return tgt, src, idx


def build_hetnet(cad: CAD, beta: float = 0.01, seed: int = 0) -> HetNet:
    nodes = build_node_set(cad)
    return HetNet(
        node_set=nodes,
        inter=build_inter_network(cad, nodes),
        intra=build_intra_network(cad, nodes, beta=beta, seed=seed),
        rng_seed=seed,
    )


def export_edge_list(net: HetNet, which: str, path) -> None:
    """Write tab-separated rows: u_token, v_token, raw, weight, kind.

    Tokens are attribute-qualified ("Attr=value") so they identify nodes
    unambiguously; rows are sorted by (u id, v id).
    """
    edges = net.edges(which)
    lines = []
    for i in range(len(edges)):
        lines.append("\t".join([
            net.node_set.qualified(int(edges.u[i])),
            net.node_set.qualified(int(edges.v[i])),
            repr(float(edges.raw[i])),
            repr(float(edges.weight[i])),
            edges.kind_name(i),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_edge_list(path) -> list[tuple[str, str, float, float, str]]:
    """Parse an exported edge list back into (u, v, raw, weight, kind) rows."""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        u, v, raw, weight, kind = line.split("\t")
        rows.append((u, v, float(raw), float(weight), kind))
    return rows
