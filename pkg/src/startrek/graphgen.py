"""Synthetic graphs, precision matrices and ground-truth bookkeeping."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import InvalidInput

KINDS = ("hub", "random", "scalefree", "knn")
_ALIASES = {"scale-free": "scalefree", "scale_free": "scalefree", "er": "random"}
KNN_K_VALUES = (1, 2, 3, 4)
KNN_K_PROBS = (0.4, 0.3, 0.2, 0.1)


def normalize_kind(kind):
    kind = _ALIASES.get(str(kind).lower(), str(kind).lower())
    if kind not in KINDS:
        raise InvalidInput(f"unknown graph kind {kind!r}; expected one of {KINDS}")
    return kind


class DisjointSet:
    """Union-find with path halving and union by size."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n
        self.count = n

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.count -= 1
        return True


def count_components(adjacency):
    adjacency = np.asarray(adjacency)
    ds = DisjointSet(adjacency.shape[0])
    for j, k in zip(*np.nonzero(np.triu(adjacency, 1))):
        ds.union(int(j), int(k))
    return ds.count


@dataclass
class GraphModel:
    adjacency: np.ndarray
    precision: np.ndarray
    groups: List[np.ndarray]
    kind: str
    params: Dict[str, float] = field(default_factory=dict)
    seed: Optional[int] = None

    @property
    def d(self):
        return self.adjacency.shape[0]

    def edges(self):
        j, k = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(j.tolist(), k.tolist()))

    def to_dict(self):
        return {
            "kind": self.kind,
            "d": self.d,
            "seed": self.seed,
            "params": dict(self.params),
            "groups": [g.tolist() for g in self.groups],
            "edges": [list(e) for e in self.edges()],
        }

    @classmethod
    def from_dict(cls, data):
        d = int(data["d"])
        adj = np.zeros((d, d), dtype=np.int8)
        for j, k in data["edges"]:
            adj[j, k] = adj[k, j] = 1
        params = dict(data.get("params", {}))
        prec = precision_from_adjacency(adj, params.get("v", 0.4), params.get("u", 0.1))
        groups = [np.asarray(g, dtype=int) for g in data.get("groups", [list(range(d))])]
        return cls(adj, prec, groups, data["kind"], params, data.get("seed"))


def precision_from_adjacency(adjacency, v=0.4, u=0.1):
    """``v A + (|lambda_min(v A)| + u) I``; the smallest eigenvalue is ``u``."""
    A = v * np.asarray(adjacency, dtype=float)
    shift = abs(np.linalg.eigvalsh(A).min()) + u
    return A + shift * np.eye(A.shape[0])


def _hub_edges(size, rng):
    hub = int(rng.integers(size))
    return [(hub, i) for i in range(size) if i != hub]


def _random_edges(size, prob, rng):
    j, k = np.triu_indices(size, 1)
    keep = rng.random(j.size) < prob
    return list(zip(j[keep].tolist(), k[keep].tolist()))


def _scalefree_edges(size, rng):
    # preferential attachment with one edge per new node, from a connected pair
    edges = [(0, 1)]
    deg = np.zeros(size)
    deg[:2] = 1
    for i in range(2, size):
        target = int(rng.choice(i, p=deg[:i] / deg[:i].sum()))
        edges.append((target, i))
        deg[target] += 1
        deg[i] = 1
    # one more edge so that the group has as many edges as nodes
    if size >= 3:
        present = {tuple(sorted(e)) for e in edges}
        free = [(a, b) for a in range(size) for b in range(a + 1, size) if (a, b) not in present]
        if free:
            edges.append(free[int(rng.integers(len(free)))])
    return edges


def _knn_edges(size, rng, k=None):
    # ring layout: node i links to its k_i nearest ring positions, +1, -1, +2, -2, ...
    if k is None:
        ks = rng.choice(KNN_K_VALUES, size=size, p=KNN_K_PROBS)
    else:
        ks = np.full(size, int(k))
    ks = np.minimum(ks, size - 1)
    offsets = []
    for step in range(1, size):
        offsets += [step, -step]
    edges = set()
    for i in range(size):
        for off in offsets[: ks[i]]:
            a, b = sorted((i, (i + off) % size))
            if a != b:
                edges.add((a, b))
    return sorted(edges)


def generate_graph(kind, d, p_groups=1, seed=0, v=0.4, u=0.1, connect_prob=0.15, knn_k=None):
    """Random graph of ``p_groups`` disconnected blocks and its precision matrix.

    Nodes are shuffled and split into near-equal groups; edges are drawn within
    groups only, according to ``kind``:

    ``hub``        one random centre joined to every other group member
    ``random``     Erdos-Renyi with edge probability ``connect_prob``
    ``scalefree``  preferential attachment, one edge per new node, plus one
                   extra uniform edge so edges equal nodes
    ``knn``        ring neighbours; each node draws k from {1, 2, 3, 4} with
                   probabilities {0.4, 0.3, 0.2, 0.1} unless ``knn_k`` is given

    Parameters
    ----------
    kind : str
    d : int
        Number of nodes.
    p_groups : int
    seed : int
        Group ``g`` uses the stream ``SeedSequence([seed, g])``; the partition
        uses ``seed`` directly.
    v, u : float
        Off-diagonal value and eigenvalue margin of the precision matrix.
    """
    kind = normalize_kind(kind)
    if not 1 <= p_groups <= d:
        raise InvalidInput(f"need 1 <= p_groups <= d, got p_groups={p_groups}, d={d}")
    rng = np.random.default_rng(seed)
    groups = [np.sort(g) for g in np.array_split(rng.permutation(d), p_groups)]
    if kind == "scalefree" and min(len(g) for g in groups) < 2:
        raise InvalidInput("scale-free groups need at least 2 nodes")
    adj = np.zeros((d, d), dtype=np.int8)
    for gi, members in enumerate(groups):
        grng = np.random.default_rng([seed, gi])
        # order within the group is random so local labels carry no structure
        order = members[grng.permutation(len(members))]
        size = len(order)
        if kind == "hub":
            local = _hub_edges(size, grng)
        elif kind == "random":
            local = _random_edges(size, connect_prob, grng)
        elif kind == "scalefree":
            local = _scalefree_edges(size, grng)
        else:
            local = _knn_edges(size, grng, knn_k)
        for a, b in local:
            adj[order[a], order[b]] = adj[order[b], order[a]] = 1
    params = {"v": v, "u": u, "connect_prob": connect_prob, "p_groups": p_groups}
    if knn_k is not None:
        params["knn_k"] = knn_k
    return GraphModel(adj, precision_from_adjacency(adj, v, u), groups, kind, params, seed)


@dataclass
class GroundTruth:
    degrees: np.ndarray
    H0: np.ndarray
    hubs: np.ndarray
    d0: int
    S_count: int
    p: int


def nonzero_pattern(theta):
    """Boolean support with the diagonal always counted as nonzero."""
    nz = np.asarray(theta) != 0
    nz = nz.copy()
    np.fill_diagonal(nz, True)
    return nz


def count_S(theta, null_nodes):
    """Number of tuples ``(j1 < j2, k1 != k2)`` of the dependence set.

    ``j1, j2`` are null nodes with ``theta[j1, j2] = 0``; ``k1`` is a neighbour
    of ``j2`` but not of ``j1`` and ``k2`` a neighbour of ``j1`` but not of
    ``j2`` (diagonals count as nonzero, so ``k1 = j2`` and ``k2 = j1`` are
    allowed). The two candidate sets are disjoint, so the count per pair is a
    product of set sizes.
    """
    nz = nonzero_pattern(theta).astype(np.int64)
    idx = np.asarray(null_nodes, dtype=int)
    if idx.size < 2:
        return 0
    N = nz[idx]
    common = N @ N.T
    size = N.sum(axis=1)
    only_j2 = size[None, :] - common  # |N(j2) \ N(j1)| at [j1, j2]
    only_j1 = size[:, None] - common
    ok = nz[np.ix_(idx, idx)] == 0
    ok = np.triu(ok, 1)
    return int(np.sum((only_j2 * only_j1)[ok]))


def ground_truth(model, k_tau):
    """Degrees, null set ``{j : degree(j) < k_tau}``, hubs, ``|S|`` and component count."""
    adj = np.asarray(model.adjacency if isinstance(model, GraphModel) else model)
    adj = (adj != 0).astype(np.int8)
    np.fill_diagonal(adj, 0)
    degrees = adj.sum(axis=1)
    null = degrees < k_tau
    H0 = np.flatnonzero(null)
    hubs = np.flatnonzero(~null)
    return GroundTruth(degrees, H0, hubs, int(H0.size), count_S(adj, H0), count_components(adj))


def sample_gaussian(precision, n, seed):
    """``n`` draws from ``N(0, precision^{-1})`` via the Cholesky factor of the precision."""
    L = np.linalg.cholesky(np.asarray(precision, dtype=float))
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((precision.shape[0], n))
    # L' x = z gives cov(x) = (L L')^{-1}
    return np.linalg.solve(L.T, Z).T
