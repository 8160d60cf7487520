"""Static figures: feature/cluster map overlays and node-edge graph renderings."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .graph_builder import ClusterGraph  # noqa: E402

__all__ = ["roi_slice", "plot_map_overlay", "plot_graph"]

# PNG metadata without a version string keeps reruns byte-identical across installs
_PNG_META = {"Software": None}


def roi_slice(mask: np.ndarray) -> int:
    """Index of the axial (last-axis) slice holding the most ROI voxels."""
    counts = np.asarray(mask).reshape(-1, mask.shape[-1]).sum(axis=0)
    return int(np.argmax(counts))


def plot_map_overlay(values: np.ndarray, mask: np.ndarray, out, background: np.ndarray | None = None,
                     title: str = "", cmap: str = "jet", discrete: bool = False, z: int | None = None) -> Path:
    """Heatmap of ``values`` on the ROI over a grey ``background`` slice."""
    mask = np.asarray(mask, dtype=bool)
    z = roi_slice(mask) if z is None else z
    fig, ax = plt.subplots(figsize=(4.5, 4.0), dpi=100)
    if background is not None:
        ax.imshow(np.asarray(background)[:, :, z].T, cmap="gray", origin="lower", interpolation="nearest")
    layer = np.where(mask[:, :, z], np.asarray(values, dtype=np.float64)[:, :, z], np.nan)
    if discrete:
        k = int(np.nanmax(layer)) + 1 if np.isfinite(layer).any() else 1
        im = ax.imshow(layer.T, cmap=plt.get_cmap("tab10", max(k, 1)), origin="lower",
                       interpolation="nearest", vmin=-0.5, vmax=k - 0.5, alpha=0.85)
    else:
        im = ax.imshow(layer.T, cmap=cmap, origin="lower", interpolation="nearest", alpha=0.85)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    ax.set_title(f"{title} (z={z})" if title else f"z={z}")
    ax.set_axis_off()
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata=_PNG_META, bbox_inches="tight")
    plt.close(fig)
    return out


def plot_graph(graph: ClusterGraph, out, title: str = "") -> Path:
    """Nodes at their centroids (x, y), sized by voxel count, coloured by cluster mean.

    Edge line width scales inversely with EMD weight, so similar neighbours
    are drawn with heavier strokes.
    """
    fig, ax = plt.subplots(figsize=(4.5, 4.0), dpi=100)
    pos = np.array([n.centroid[:2] for n in graph.nodes]) if graph.nodes else np.zeros((0, 2))
    edges = graph.edges
    if edges:
        ws = np.array([w for _, _, w in edges])
        top = ws.max() if ws.max() > 0 else 1.0
        for (i, j, w) in edges:
            ax.plot(pos[[i, j], 0], pos[[i, j], 1], color="0.35", zorder=1,
                    linewidth=0.8 + 2.5 * (1.0 - w / top))
    if len(pos):
        counts = np.array([n.count for n in graph.nodes], dtype=np.float64)
        means = np.array([n.mean_value for n in graph.nodes])
        sc = ax.scatter(pos[:, 0], pos[:, 1], s=80 + 600 * counts / counts.max(), c=means, cmap="viridis",
                        edgecolors="k", zorder=2)
        for n, (x, y) in zip(graph.nodes, pos):
            ax.annotate(str(n.cluster_id), (x, y), ha="center", va="center", fontsize=8, zorder=3)
        fig.colorbar(sc, ax=ax, fraction=0.046, pad=0.04, label="cluster mean")
    ax.set_title(title or f"{graph.n_nodes} nodes, {graph.n_edges} edges")
    ax.set_xlabel("x (voxels)")
    ax.set_ylabel("y (voxels)")
    ax.margins(0.2)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata=_PNG_META, bbox_inches="tight")
    plt.close(fig)
    return out
