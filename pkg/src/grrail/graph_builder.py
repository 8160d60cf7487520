"""Weighted region-adjacency graphs over the clusters of a cluster map.

One node per cluster, located at the cluster's centroid. Edges join
clusters that touch in 26-connectivity (``rag26``) or every pair
(``complete``), weighted by the 1-D earth mover's distance between the
clusters' feature-value histograms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import ClusterMap
from .glcm import OFFSETS

__all__ = [
    "Node",
    "ClusterGraph",
    "centroids",
    "cluster_histogram",
    "emd_1d",
    "build_graph",
    "save_graph",
    "load_graph",
    "EDGE_POLICIES",
    "WEIGHT_POLICIES",
]

EDGE_POLICIES = ("rag26", "complete")
WEIGHT_POLICIES = ("emd", "centroid")


@dataclass(frozen=True)
class Node:
    cluster_id: int
    centroid: tuple[float, float, float]
    count: int
    mean_value: float
    histogram: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class ClusterGraph:
    nodes: list[Node]
    adjacency: np.ndarray   # int 0/1, symmetric, zero diagonal
    weights: np.ndarray     # w_ij on edges, 0 elsewhere
    policy: str = "rag26"
    hist_bins: int = 32
    bin_width: float = 1.0

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(a), int(b), float(self.weights[a, b])) for a, b in zip(i, j)]

    @property
    def n_edges(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())


def centroids(cm: ClusterMap) -> list[tuple[float, float, float]]:
    """Mean voxel coordinate of each cluster (continuous, not snapped)."""
    out = []
    for u in range(cm.u):
        coords = np.argwhere(cm.labels == u)
        # integer sums are exact; one division per axis
        s = coords.sum(axis=0)
        out.append(tuple(float(v) / len(coords) for v in s))
    return out


def _value_range(fmap_values: np.ndarray) -> tuple[float, float]:
    return float(fmap_values.min()), float(fmap_values.max())


def _bin_index(vals: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    if hi <= lo:
        return np.zeros(vals.shape, dtype=np.int64)
    idx = np.floor((vals - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def cluster_histogram(cm: ClusterMap, fmap, u: int, bins: int = 32) -> np.ndarray:
    """Normalised histogram of cluster ``u``'s feature values.

    Bins are equal-width over the whole ROI range of the map, so histograms
    of different clusters share one grid.
    """
    roi = np.asarray(fmap.values)[cm.mask]
    lo, hi = _value_range(roi)
    vals = np.asarray(fmap.values)[cm.labels == u]
    if vals.size == 0:
        raise ValueError(f"cluster {u} is empty")
    counts = np.bincount(_bin_index(vals, lo, hi, bins), minlength=bins).astype(np.float64)
    return counts / vals.size


def emd_1d(h1, h2, bin_width: float = 1.0) -> float:
    """Earth mover's distance between two normalised histograms on the same bin grid."""
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape:
        raise ValueError(f"bin count mismatch: {h1.shape} vs {h2.shape}")
    return float(bin_width * np.abs(np.cumsum(h1) - np.cumsum(h2)).sum())


def _touching_pairs(labels: np.ndarray, u: int) -> np.ndarray:
    adj = np.zeros((u, u), dtype=np.int64)
    n = labels.shape
    for off in OFFSETS:
        src = labels[tuple(slice(max(0, -d), n[a] - max(0, d)) for a, d in enumerate(off))]
        dst = labels[tuple(slice(max(0, d), n[a] - max(0, -d)) for a, d in enumerate(off))]
        ok = (src >= 0) & (dst >= 0) & (src != dst)
        if ok.any():
            adj[src[ok], dst[ok]] = 1
    return adj | adj.T


def build_graph(cm: ClusterMap, fmap, policy: str = "rag26", bins: int = 32, weight: str = "emd") -> ClusterGraph:
    """Build the cluster graph of one feature map."""
    if policy not in EDGE_POLICIES:
        raise ValueError(f"unknown edge policy {policy!r}")
    if weight not in WEIGHT_POLICIES:
        raise ValueError(f"unknown weight policy {weight!r}")
    u = cm.u
    roi = np.asarray(fmap.values)[cm.mask]
    lo, hi = _value_range(roi)
    bin_width = (hi - lo) / bins if hi > lo else 1.0
    cents = centroids(cm)
    hists = [cluster_histogram(cm, fmap, c, bins) for c in range(u)]
    nodes = [
        Node(c, cents[c], int(cm.member_counts[c]), float(cm.cluster_means[c]), hists[c])
        for c in range(u)
    ]
    if policy == "complete":
        adj = np.ones((u, u), dtype=np.int64)
    else:
        adj = _touching_pairs(cm.labels, u)
    np.fill_diagonal(adj, 0)
    w = np.zeros((u, u))
    for i, j in zip(*np.nonzero(np.triu(adj, 1))):
        if weight == "emd":
            d = emd_1d(hists[i], hists[j], bin_width)
        else:
            d = float(np.linalg.norm(np.subtract(cents[i], cents[j])))
        w[i, j] = w[j, i] = d
    return ClusterGraph(nodes, adj, w, policy, bins, bin_width)


def graph_to_dict(g: ClusterGraph) -> dict:
    return {
        "format": "grrail-graph",
        "version": 1,
        "policy": g.policy,
        "hist_bins": g.hist_bins,
        "bin_width": g.bin_width,
        "nodes": [
            {
                "id": n.cluster_id,
                "centroid": list(n.centroid),
                "count": n.count,
                "mean": n.mean_value,
                "histogram": [float(v) for v in n.histogram],
            }
            for n in g.nodes
        ],
        "edges": [{"i": i, "j": j, "weight": w} for i, j, w in g.edges],
        "adjacency": g.adjacency.tolist(),
    }


def graph_from_dict(d: dict) -> ClusterGraph:
    nodes = [
        Node(int(n["id"]), tuple(n["centroid"]), int(n["count"]), float(n["mean"]),
             np.asarray(n["histogram"], dtype=np.float64))
        for n in d["nodes"]
    ]
    adj = np.asarray(d["adjacency"], dtype=np.int64).reshape(len(nodes), len(nodes))
    w = np.zeros(adj.shape)
    for e in d["edges"]:
        w[e["i"], e["j"]] = w[e["j"], e["i"]] = e["weight"]
    return ClusterGraph(nodes, adj, w, d.get("policy", "rag26"), int(d.get("hist_bins", 32)),
                        float(d.get("bin_width", 1.0)))


def save_graph(path, g: ClusterGraph, extra: dict | None = None) -> Path:
    path = Path(path)
    d = graph_to_dict(g)
    d.update(extra or {})
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")
    return path


def load_graph(path) -> ClusterGraph:
    return graph_from_dict(json.loads(Path(path).read_text()))
