"""Sensitivity of GrRAiL to the grey-level count and the edge policy.

Runs bins in {4, 16, 64} x edge policy in {rag26, complete} on one phantom
cohort and reports mean graph size per class and held-out AUC.

    python scripts/bin_sensitivity.py --n 12 --shape 32 --semi-axes 10,9,8
"""

from __future__ import annotations

import argparse
import json
import time

from _cohort import descriptor_tables, make_cohort, mean_nodes_edges
from grrail.config import RunConfig
from grrail.ml_harness import cross_validate, mann_whitney_u


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=12, help="subjects per class")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--shape", type=int, default=32)
    ap.add_argument("--semi-axes", default="10,9,8")
    ap.add_argument("--bins", default="4,16,64")
    ap.add_argument("--n-trees", type=int, default=200)
    ap.add_argument("--out", help="write the results as JSON")
    args = ap.parse_args()

    axes = tuple(float(a) for a in args.semi_axes.split(","))
    subjects = make_cohort(args.n, args.seed, args.shape, axes)
    rows = []
    print(f"{'bins':>5} {'policy':<9}{'nodes 0/1':>14}{'edges 0/1':>14}{'p(nodes)':>10}{'test auc':>10}{'sec':>6}")
    for bins in (int(b) for b in args.bins.split(",")):
        for policy in ("rag26", "complete"):
            t0 = time.perf_counter()
            cfg = RunConfig(seed=args.seed, bins=bins, edge_policy=policy, n_trees=args.n_trees)
            table = descriptor_tables(subjects, cfg, ("grrail",))["grrail"]
            nodes, edges = mean_nodes_edges(table)
            y = table.y
            _, p = mann_whitney_u(nodes[y == 1], nodes[y == 0])
            rep = cross_validate(table, cfg, cfg.seed)
            row = {"bins": bins, "edge_policy": policy,
                   "nodes": [float(nodes[y == 0].mean()), float(nodes[y == 1].mean())],
                   "edges": [float(edges[y == 0].mean()), float(edges[y == 1].mean())],
                   "p_nodes": p, "test_auc": rep.test_auc, "cv_auc": rep.cv_auc,
                   "seconds": round(time.perf_counter() - t0, 1)}
            rows.append(row)
            print(f"{bins:>5} {policy:<9}{row['nodes'][0]:>7.2f}/{row['nodes'][1]:<6.2f}"
                  f"{row['edges'][0]:>7.2f}/{row['edges'][1]:<6.2f}{p:>10.1e}{rep.test_auc:>10.3f}{row['seconds']:>6.0f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
