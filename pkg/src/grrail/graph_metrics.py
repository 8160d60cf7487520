"""The 15 global graph features of a cluster graph.

Shortest-path quantities (diameter, radius, average path length, global
efficiency) use edge weights as distances. Triangle- and degree-based
quantities use the unweighted topology. Modularity uses the weight matrix as
edge strengths. See ``docs/metric_ledger.md`` for the fixed definitions of
the loosely specified metrics.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

__all__ = ["METRIC_NAMES", "SINGLE_NODE_ROW", "graph_features", "features_from_adjacency", "modularity_of",
           "best_modularity"]

METRIC_NAMES = (
    "size",
    "density",
    "diameter",
    "avg_path_length",
    "clustering_coefficient",
    "modularity",
    "small_worldness",
    "connected_components",
    "assortativity",
    "radius",
    "global_efficiency",
    "network_entropy",
    "num_hubs",
    "randomness",
    "resilience",
)

RANDOMNESS_CAP = 10.0
SINGLE_NODE_ROW = (1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, RANDOMNESS_CAP, 0.0)

# partitions are enumerated exactly up to this many nodes
EXACT_MODULARITY_MAX_NODES = 8


def _distances(adj: np.ndarray, w: np.ndarray | None) -> np.ndarray:
    i, j = np.nonzero(adj)
    data = np.ones(len(i)) if w is None else w[i, j].astype(np.float64)
    # explicit zeros stay stored, so zero-weight edges remain edges
    g = csr_matrix((data, (i, j)), shape=adj.shape)
    return shortest_path(g, method="D", directed=False)


def _set_partitions(n: int):
    """Restricted-growth strings of length n (each set partition once)."""
    labels = [0] * n

    def rec(k, m):
        if k == n:
            yield tuple(labels)
            return
        for c in range(m + 1):
            labels[k] = c
            yield from rec(k + 1, max(m, c + 1))

    if n > 0:
        yield from rec(1, 1)


def modularity_of(w: np.ndarray, communities) -> float:
    """Newman modularity of a labelling on a symmetric strength matrix."""
    two_m = w.sum()
    if two_m <= 0:
        return 0.0
    k = w.sum(axis=1)
    c = np.asarray(communities)
    same = c[:, None] == c[None, :]
    return float(((w - np.outer(k, k) / two_m) * same).sum() / two_m)


def _greedy_modularity(w: np.ndarray) -> float:
    n = w.shape[0]
    two_m = w.sum()
    comms = [[i] for i in range(n)]
    k = w.sum(axis=1) / two_m
    e = w / two_m
    q = float(np.trace(e) - (k ** 2).sum())
    best = q
    while len(comms) > 1:
        pick = None
        for a, b in itertools.combinations(range(len(comms)), 2):
            eab = e[np.ix_(comms[a], comms[b])].sum()
            dq = 2.0 * (eab - k[comms[a]].sum() * k[comms[b]].sum())
            if pick is None or dq > pick[0]:
                pick = (dq, a, b)
        dq, a, b = pick
        comms[a] = comms[a] + comms[b]
        del comms[b]
        q += dq
        best = max(best, q)
    return float(best)


def best_modularity(w: np.ndarray) -> float:
    """Maximum modularity of the strength matrix ``w``.

    Exhaustive over set partitions for small graphs, greedy agglomerative
    (largest gain first, lowest index pair on ties) beyond that.
    """
    n = w.shape[0]
    if n < 2 or w.sum() <= 0:
        return 0.0
    if n > EXACT_MODULARITY_MAX_NODES:
        return _greedy_modularity(w)
    two_m = w.sum()
    b = w - np.outer(w.sum(axis=1), w.sum(axis=1)) / two_m
    best = -np.inf
    for labels in _set_partitions(n):
        c = np.asarray(labels)
        best = max(best, float(b[c[:, None] == c[None, :]].sum()))
    return best / two_m


def _transitivity(adj: np.ndarray) -> float:
    a = adj.astype(np.int64)
    deg = a.sum(axis=1)
    triplets = int((deg * (deg - 1)).sum()) // 2
    if triplets == 0:
        return 0.0
    closed = int(np.trace(a @ a @ a))  # = 6 * triangles
    return (closed // 2) / triplets


def _assortativity(adj: np.ndarray) -> float:
    deg = adj.sum(axis=1).astype(np.float64)
    i, j = np.nonzero(adj)
    if len(i) == 0:
        return 0.0
    x, y = deg[i], deg[j]
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        return 0.0
    return float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))


def _entropy_bits(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(0.0 - (p * np.log2(p)).sum())


def _num_hubs(deg: np.ndarray) -> int:
    # deg > mean + std evaluated in exact integer arithmetic
    n = len(deg)
    s = int(deg.sum())
    q = int((deg * deg).sum())
    n2var = n * q - s * s
    return int(sum(1 for d in deg if n * int(d) - s > 0 and (n * int(d) - s) ** 2 > n2var))


def _largest_component_size(adj: np.ndarray) -> int:
    if adj.shape[0] == 0:
        return 0
    _, lab = connected_components(csr_matrix(adj), directed=False)
    return int(np.bincount(lab).max())


def features_from_adjacency(adjacency, weights=None) -> np.ndarray:
    """Compute the 15 metrics from a 0/1 adjacency and optional distance weights.

    ``weights=None`` means unit edge lengths.
    """
    adj = (np.asarray(adjacency) != 0).astype(np.int64)
    np.fill_diagonal(adj, 0)
    adj = adj | adj.T
    n = adj.shape[0]
    if n < 1:
        raise ValueError("graph has no nodes")
    w = np.where(adj > 0, 1.0 if weights is None else np.asarray(weights, dtype=np.float64), 0.0)
    if np.any(w < 0):
        raise ValueError("edge weights must be non-negative")
    if n == 1:
        return np.array(SINGLE_NODE_ROW)

    n_edges = int(adj.sum()) // 2
    deg = adj.sum(axis=1)
    density = 2.0 * n_edges / (n * (n - 1))

    dist = _distances(adj, w)
    hops = _distances(adj, None)
    n_comp, comp = connected_components(csr_matrix(adj), directed=False)
    sizes = np.bincount(comp)
    big = np.flatnonzero(comp == int(np.argmax(sizes)))
    sub = dist[np.ix_(big, big)]
    ecc = sub.max(axis=1)
    diameter = float(ecc.max())
    radius = float(ecc.min())

    iu = np.triu_indices(n, 1)
    pair_d = dist[iu]
    finite = np.isfinite(pair_d)
    apl = float(pair_d[finite].mean()) if finite.any() else 0.0
    pair_h = hops[iu]
    l_u = float(pair_h[finite].mean()) if finite.any() else 0.0

    off = ~np.eye(n, dtype=bool)
    dd = dist[off]
    inv = np.zeros_like(dd)
    ok = np.isfinite(dd) & (dd > 0)
    inv[ok] = 1.0 / dd[ok]
    efficiency = float(inv.sum() / (n * (n - 1)))

    cc = _transitivity(adj)
    mean_deg = 2.0 * n_edges / n
    if cc > 0 and density > 0 and l_u > 0 and mean_deg > 1:
        l_r = math.log(n) / math.log(mean_deg)
        small_world = (cc / density) / (l_u / l_r)
    else:
        small_world = 0.0

    randomness = RANDOMNESS_CAP if cc == 0 else min(max(density / cc, 0.0), RANDOMNESS_CAP)

    victim = int(np.argmax(deg))
    keep = np.delete(np.arange(n), victim)
    resilience = _largest_component_size(adj[np.ix_(keep, keep)]) / (n - 1)

    return np.array(
        [
            float(n),
            density,
            diameter,
            apl,
            cc,
            best_modularity(w),
            small_world,
            float(n_comp),
            _assortativity(adj),
            radius,
            efficiency,
            _entropy_bits(np.bincount(deg)),
            float(_num_hubs(deg)),
            randomness,
            resilience,
        ]
    )


def graph_features(graph) -> np.ndarray:
    """The 15 metrics of a ``ClusterGraph`` in ``METRIC_NAMES`` order."""
    return features_from_adjacency(graph.adjacency, graph.weights)
