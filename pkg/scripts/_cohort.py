"""Shared helpers for the experiment scripts: an in-memory phantom cohort."""

from __future__ import annotations

import numpy as np

from grrail.config import RunConfig, derive_seed
from grrail.descriptors import describe
from grrail.ml_harness import CohortTable
from grrail.phantoms import generate_phantom, sample_spec


def make_cohort(per_class: int, seed: int, shape: int, semi_axes, test_frac: float = 0.25):
    """Subjects as ``(sid, grid, roi, label, split)`` using the CLI's id, seed and split rules."""
    rng = np.random.default_rng(derive_seed(seed, "split") % 2 ** 63)
    n_test = int(round(per_class * test_frac))
    test_pos = {lab: set(rng.permutation(per_class)[:n_test].tolist()) for lab in (0, 1)}
    out = []
    for i in range(2 * per_class):
        label, pos = i % 2, i // 2
        sid = f"phantom_{i:03d}"
        grid, roi, lab = generate_phantom(sample_spec(label, derive_seed(seed, sid), (shape,) * 3, semi_axes))
        out.append((sid, grid, roi, lab, "test" if pos in test_pos[label] else "train"))
    return out


def descriptor_tables(subjects, cfg: RunConfig, kinds) -> dict[str, CohortTable]:
    rows = {k: [] for k in kinds}
    names = {}
    for sid, grid, roi, _, _ in subjects:
        for k, d in describe(grid, roi, cfg, derive_seed(cfg.seed, sid), kinds=kinds).items():
            rows[k].append(d.values)
            names[k] = list(d.names)
    ids = [s[0] for s in subjects]
    y = [s[3] for s in subjects]
    split = [s[4] for s in subjects]
    return {k: CohortTable(ids, np.vstack(rows[k]), y, split, names[k]) for k in kinds}


def mean_nodes_edges(table: CohortTable) -> tuple[np.ndarray, np.ndarray]:
    from grrail.cli import node_edge_summary

    s = node_edge_summary(table.names, table.X)
    return s["mean_map_nodes"], s["mean_map_edges"]
