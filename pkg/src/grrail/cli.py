"""Batch command line for the descriptor pipeline.

Stages and the manifest each one consumes::

    phantom-cohort                  -> volumes manifest
    resample   volumes manifest     -> volumes manifest
    extract    volumes manifest     -> maps manifest
    cluster    maps manifest        -> clusters manifest
    graph      clusters manifest    -> graphs manifest
    descriptor any of the above     -> <kind>.csv
    classify   descriptor CSV + manifest -> report.json / report.csv
    stats      descriptor CSV + manifest -> per-feature Mann-Whitney table; or a z-test
    plot       maps / clusters / graphs manifest -> PNG files

Manifests are CSV files whose paths are relative to the manifest itself.
Every stage also writes ``run.json`` echoing the resolved config and the
per-subject seeds. Failures print one JSON object to stderr and exit nonzero
(2 for usage, config and manifest errors; 1 for processing errors).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import DESCRIPTOR_KINDS, ConfigError, RunConfig, derive_seed

MANIFEST = "manifest.csv"
RUN_JSON = "run.json"
# execution-only settings; they never change results, so they stay out of config echoes
_EXECUTION_KEYS = ("workers", "threads")


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = 2):
        super().__init__(message)
        self.kind = kind
        self.code = code

    def __reduce__(self):
        return (CliError, (self.kind, str(self), self.code))


class SubjectError(Exception):
    """Processing failure tied to one subject (picklable across worker processes)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}")


# --------------------------------------------------------------------------- #
# manifests and config


def config_echo(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    for k in _EXECUTION_KEYS:
        d.pop(k)
    return d


def subject_seed(cfg: RunConfig, sid: str) -> int:
    return derive_seed(cfg.seed, sid)


def read_manifest(path, required=("subject_id",)) -> tuple[Path, list[dict]]:
    path = Path(path)
    if not path.is_file():
        raise CliError("missing_input", f"manifest not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in required if c not in cols]
        if missing:
            raise CliError("malformed_manifest", f"{path}: missing column(s) {', '.join(missing)}")
        rows = list(reader)
    seen = set()
    for n, r in enumerate(rows, 2):
        sid = (r.get("subject_id") or "").strip()
        if not sid:
            raise CliError("malformed_manifest", f"{path}:{n}: empty subject_id")
        if sid in seen:
            raise CliError("malformed_manifest", f"{path}:{n}: duplicate subject_id {sid!r}")
        if any(v is None for v in r.values()):
            raise CliError("malformed_manifest", f"{path}:{n}: too few fields")
        seen.add(sid)
        r["subject_id"] = sid
    if not rows:
        raise CliError("malformed_manifest", f"{path}: no subjects")
    return path.parent, rows


def _abs(base: Path, p: str) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _rel(target: Path, manifest_dir: Path) -> str:
    return Path(os.path.relpath(Path(target).resolve(), Path(manifest_dir).resolve())).as_posix()


def _require(path: Path, what: str, sid: str) -> Path:
    if not path.exists():
        raise CliError("missing_input", f"subject {sid}: {what} not found: {path}")
    return path


def write_manifest(path: Path, rows: list[dict], columns: list[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([r.get(c, "") for c in columns])
    return path


def write_run_json(out_dir: Path, stage: str, cfg: RunConfig, seeds: dict, extra: dict | None = None) -> Path:
    d = {"stage": stage, "config": config_echo(cfg), "master_seed": cfg.seed, "subject_seeds": seeds}
    d.update(extra or {})
    p = Path(out_dir) / RUN_JSON
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    return p


def _carry(row: dict, base: Path, out_dir: Path) -> dict:
    """Pass-through columns with paths re-rooted at the new manifest directory."""
    keep = {"subject_id": row["subject_id"], "label": row.get("label", ""), "split": row.get("split", "")}
    for col in ("volume", "mask", "maps", "clusters"):
        if row.get(col):
            keep[col] = _rel(_abs(base, row[col]), out_dir)
    return keep


def _run_pool(fn, tasks: list, workers: int) -> list:
    """Map ``fn`` over ``tasks`` in input order, in-process or in a spawn pool."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks)), mp_context=ctx) as ex:
        return list(ex.map(fn, tasks))


def _guard(fn, sid: str, *args):
    try:
        return fn(*args)
    except CliError:
        raise
    except Exception as exc:  # noqa: BLE001 - reported per subject
        raise SubjectError(f"subject {sid}: {type(exc).__name__}: {exc}") from None


def input_hash(paths: dict) -> str:
    """sha256 over a subject's input files (directories: every file, sorted by name)."""
    h = hashlib.sha256()
    for col in sorted(paths):
        p = Path(paths[col])
        files = sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p]
        for f in files:
            h.update(f"{col}/{f.relative_to(p) if p.is_dir() else f.name}".encode())
            h.update(f.read_bytes())
    return h.hexdigest()


def _fmt(v: float) -> str:
    return repr(float(v))


# --------------------------------------------------------------------------- #
# per-subject workers (top level so spawn pools can pickle them)


def _task_resample(t):
    from .volume_io import load_mask, load_volume, resample_isotropic, save_raw

    sid, vol, mask, out_vol, out_mask, cfg = t

    def run():
        g, m = resample_isotropic(load_volume(vol), load_mask(mask), cfg.target_mm, cfg.interp)
        save_raw(out_vol, g)
        save_raw(out_mask, m)

    return _guard(run, sid)


def _task_extract(t):
    from .descriptors import RoiTooSmallError
    from .glcm import extract_feature_maps, save_feature_map
    from .volume_io import load_mask, load_volume, validate_pair, volume_hash

    sid, vol, mask, out_dir, cfg = t

    def run():
        grid, roi = load_volume(vol), load_mask(mask)
        n = validate_pair(grid, roi)
        if n < cfg.min_roi_voxels:
            raise RoiTooSmallError(f"ROI has {n} voxels, fewer than min_roi_voxels={cfg.min_roi_voxels}")
        h = volume_hash(grid)
        for fmap in extract_feature_maps(grid, roi, cfg.bins, cfg.threads):
            save_feature_map(Path(out_dir) / f"{fmap.name}.raw", fmap, h)

    return _guard(run, sid)


def _load_maps(maps_dir: Path, roi):
    from .glcm import FEATURE_NAMES, load_feature_map

    return [load_feature_map(maps_dir / f"{name}.raw", roi) for name in FEATURE_NAMES]


def _task_cluster(t):
    from .clustering import cluster_feature_map, save_cluster_map
    from .volume_io import load_mask

    sid, mask, maps_dir, out_dir, cfg, seed = t

    def run():
        for fmap in _load_maps(Path(maps_dir), load_mask(mask)):
            cm = cluster_feature_map(fmap, cfg.u_max, derive_seed(seed, fmap.name))
            save_cluster_map(Path(out_dir) / f"{fmap.name}.raw", cm, {"feature": fmap.name})

    return _guard(run, sid)


def _task_graph(t):
    from .clustering import load_cluster_map
    from .graph_builder import build_graph, save_graph
    from .volume_io import load_mask

    sid, mask, maps_dir, clusters_dir, out_dir, cfg = t

    def run():
        for fmap in _load_maps(Path(maps_dir), load_mask(mask)):
            cm = load_cluster_map(Path(clusters_dir) / f"{fmap.name}.raw")
            g = build_graph(cm, fmap, cfg.edge_policy, cfg.hist_bins, cfg.weight_policy)
            save_graph(Path(out_dir) / f"{fmap.name}.json", g, {"feature": fmap.name})

    return _guard(run, sid)


def _task_descriptor(t):
    from . import descriptors as D
    from .glcm import FEATURE_NAMES
    from .graph_builder import load_graph
    from .volume_io import load_mask, load_volume

    sid, paths, kinds, cfg, seed = t

    def run():
        out = {}
        grid = roi = maps = None
        if "volume" in paths:
            grid, roi = load_volume(paths["volume"]), load_mask(paths["mask"])
        if "graphs" in paths and "grrail" in kinds:
            graphs = [load_graph(Path(paths["graphs"]) / f"{n}.json") for n in FEATURE_NAMES]
            out["grrail"] = D.grrail_from_graphs(graphs)
        if ("grrail" in kinds and "grrail" not in out) or "radiomics" in kinds:
            if "maps" in paths:
                if roi is None:
                    roi = load_mask(paths["mask"])
                maps = _load_maps(Path(paths["maps"]), roi)
            elif grid is not None:
                D._check(grid, roi, cfg)
                maps = D.extract_feature_maps(grid, roi, cfg.bins, cfg.threads)
            else:
                raise CliError("malformed_manifest", f"subject {sid}: no volume or maps to compute from")
        if "grrail" in kinds and "grrail" not in out:
            out["grrail"] = D.grrail_from_graphs([D.map_graph(m, cfg, seed)[1] for m in maps])
        if "radiomics" in kinds:
            out["radiomics"] = D.radiomics_from_maps(maps)
        if "intensity" in kinds:
            if grid is None:
                raise CliError("malformed_manifest", f"subject {sid}: intensity descriptor needs a volume column")
            out["intensity"] = D.intensity_graph(grid, roi, cfg, seed)
        return {k: d.values.tolist() for k, d in out.items()}

    return _guard(run, sid)


# --------------------------------------------------------------------------- #
# commands


def cmd_phantom_cohort(args, cfg: RunConfig):
    from .phantoms import generate_phantom, sample_spec
    from .volume_io import save_raw

    out = Path(args.out)
    n = args.n
    if n < 1:
        raise CliError("usage", "--n must be >= 1")
    shape = tuple(args.shape for _ in range(3))
    axes = tuple(float(a) for a in args.semi_axes.split(","))
    if len(axes) != 3:
        raise CliError("usage", "--semi-axes takes three comma-separated values")
    n_test = int(round(n * args.test_frac))
    rng = np.random.default_rng(derive_seed(cfg.seed, "split") % 2 ** 63)
    test_pos = {lab: set(rng.permutation(n)[:n_test].tolist()) for lab in (0, 1)}
    rows, seeds = [], {}
    for i in range(2 * n):
        label, pos = i % 2, i // 2
        sid = f"phantom_{i:03d}"
        seed = subject_seed(cfg, sid)
        seeds[sid] = seed
        grid, roi, lab = generate_phantom(sample_spec(label, seed, shape, axes))
        save_raw(out / "volumes" / f"{sid}.raw", grid)
        save_raw(out / "masks" / f"{sid}.raw", roi)
        rows.append({"subject_id": sid, "volume": f"volumes/{sid}.raw", "mask": f"masks/{sid}.raw",
                     "label": lab, "split": "test" if pos in test_pos[label] else "train"})
    write_manifest(out / MANIFEST, rows, ["subject_id", "volume", "mask", "label", "split"])
    write_run_json(out, "phantom-cohort", cfg, seeds,
                   {"per_class": n, "shape": list(shape), "semi_axes": list(axes), "test_frac": args.test_frac})
    return out / MANIFEST


def cmd_resample(args, cfg: RunConfig):
    base, rows = read_manifest(args.manifest, ("subject_id", "volume", "mask"))
    out = Path(args.out)
    tasks, new_rows = [], []
    for r in rows:
        sid = r["subject_id"]
        vol = _require(_abs(base, r["volume"]), "volume", sid)
        mask = _require(_abs(base, r["mask"]), "mask", sid)
        ov, om = out / "volumes" / f"{sid}.raw", out / "masks" / f"{sid}.raw"
        tasks.append((sid, vol, mask, ov, om, cfg))
        row = _carry(r, base, out)
        row.update(volume=_rel(ov, out), mask=_rel(om, out))
        new_rows.append(row)
    _run_pool(_task_resample, tasks, cfg.workers)
    write_manifest(out / MANIFEST, new_rows, ["subject_id", "volume", "mask", "label", "split"])
    write_run_json(out, "resample", cfg, {r["subject_id"]: subject_seed(cfg, r["subject_id"]) for r in rows})
    return out / MANIFEST


def cmd_extract(args, cfg: RunConfig):
    base, rows = read_manifest(args.manifest, ("subject_id", "volume", "mask"))
    out = Path(args.out)
    tasks, new_rows = [], []
    for r in rows:
        sid = r["subject_id"]
        vol = _require(_abs(base, r["volume"]), "volume", sid)
        mask = _require(_abs(base, r["mask"]), "mask", sid)
        tasks.append((sid, vol, mask, out / sid, cfg))
        row = _carry(r, base, out)
        row["maps"] = sid
        new_rows.append(row)
    _run_pool(_task_extract, tasks, cfg.workers)
    write_manifest(out / MANIFEST, new_rows, ["subject_id", "volume", "mask", "maps", "label", "split"])
    write_run_json(out, "extract", cfg, {r["subject_id"]: subject_seed(cfg, r["subject_id"]) for r in rows})
    return out / MANIFEST


def cmd_cluster(args, cfg: RunConfig):
    base, rows = read_manifest(args.manifest, ("subject_id", "mask", "maps"))
    out = Path(args.out)
    tasks, new_rows, seeds = [], [], {}
    for r in rows:
        sid = r["subject_id"]
        seeds[sid] = subject_seed(cfg, sid)
        mask = _require(_abs(base, r["mask"]), "mask", sid)
        maps = _require(_abs(base, r["maps"]), "maps directory", sid)
        tasks.append((sid, mask, maps, out / sid, cfg, seeds[sid]))
        row = _carry(r, base, out)
        row["clusters"] = sid
        new_rows.append(row)
    _run_pool(_task_cluster, tasks, cfg.workers)
    write_manifest(out / MANIFEST, new_rows, ["subject_id", "volume", "mask", "maps", "clusters", "label", "split"])
    write_run_json(out, "cluster", cfg, seeds)
    return out / MANIFEST


def cmd_graph(args, cfg: RunConfig):
    base, rows = read_manifest(args.manifest, ("subject_id", "mask", "maps", "clusters"))
    out = Path(args.out)
    tasks, new_rows = [], []
    for r in rows:
        sid = r["subject_id"]
        mask = _require(_abs(base, r["mask"]), "mask", sid)
        maps = _require(_abs(base, r["maps"]), "maps directory", sid)
        clusters = _require(_abs(base, r["clusters"]), "clusters directory", sid)
        tasks.append((sid, mask, maps, clusters, out / sid, cfg))
        row = _carry(r, base, out)
        row["graphs"] = sid
        new_rows.append(row)
    _run_pool(_task_graph, tasks, cfg.workers)
    write_manifest(out / MANIFEST, new_rows,
                   ["subject_id", "volume", "mask", "maps", "clusters", "graphs", "label", "split"])
    write_run_json(out, "graph", cfg, {r["subject_id"]: subject_seed(cfg, r["subject_id"]) for r in rows})
    return out / MANIFEST


def _kinds(args, cfg: RunConfig) -> tuple:
    if not args.kind:
        return tuple(cfg.kinds)
    kinds = []
    for item in args.kind:
        for k in item.split(","):
            k = k.strip()
            if k not in DESCRIPTOR_KINDS:
                raise CliError("usage", f"unknown descriptor kind {k!r}; choose from {', '.join(DESCRIPTOR_KINDS)}")
            if k not in kinds:
                kinds.append(k)
    return tuple(kinds)


def cmd_descriptor(args, cfg: RunConfig):
    from .descriptors import _NAMES

    kinds = _kinds(args, cfg)
    base, rows = read_manifest(args.manifest, ("subject_id",))
    out = Path(args.out)
    tasks, seeds, hashes = [], {}, {}
    for r in rows:
        sid = r["subject_id"]
        seeds[sid] = subject_seed(cfg, sid)
        paths = {}
        for col, what in (("volume", "volume"), ("mask", "mask"), ("maps", "maps directory"),
                          ("graphs", "graphs directory")):
            if r.get(col):
                paths[col] = _require(_abs(base, r[col]), what, sid)
        if not paths:
            raise CliError("malformed_manifest", f"subject {sid}: manifest has no volume, maps or graphs column")
        hashes[sid] = input_hash(paths)
        tasks.append((sid, paths, kinds, cfg, seeds[sid]))
    results = _run_pool(_task_descriptor, tasks, cfg.workers)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for kind in kinds:
        p = out / f"{kind}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id", *_NAMES[kind]])
            for r, res in zip(rows, results):
                w.writerow([r["subject_id"], *(_fmt(v) for v in res[kind])])
        written[kind] = p.name
    write_manifest(out / MANIFEST, [_carry(r, base, out) for r in rows], ["subject_id", "label", "split"])
    write_run_json(out, "descriptor", cfg, seeds, {"kinds": list(kinds), "files": written, "input_hashes": hashes})
    return out


def cmd_classify(args, cfg: RunConfig):
    from .ml_harness import CohortTable, cross_validate, write_report

    feats = _require(Path(args.features), "features CSV", "-")
    read_manifest(args.manifest, ("subject_id", "label", "split"))
    try:
        table = CohortTable.from_csv(feats, args.manifest)
    except ValueError as exc:
        raise CliError("malformed_manifest", str(exc)) from None
    report = cross_validate(table, cfg, cfg.seed)
    extra = {
        "config": config_echo(cfg),
        "master_seed": cfg.seed,
        "features_file": Path(args.features).name,
        "n_features": len(table.names),
        "n_train": int(len(table.train_idx)),
        "n_test": int(len(table.test_idx)),
    }
    write_report(report, args.out, extra)
    return Path(args.out)


def _read_features(path) -> tuple[list[str], list[str], np.ndarray]:
    with open(_require(Path(path), "features CSV", "-"), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise CliError("malformed_manifest", f"{path}: expected subject_id plus feature columns")
    return rows[0][1:], [r[0] for r in rows[1:]], np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def node_edge_summary(names: list[str], X: np.ndarray) -> dict[str, np.ndarray]:
    """Per-subject mean node and edge counts over the 13 maps of a GrRAiL table."""
    from .glcm import FEATURE_NAMES

    idx = {n: i for i, n in enumerate(names)}
    if not all(f"{m}_size" in idx and f"{m}_density" in idx for m in FEATURE_NAMES):
        return {}
    size = np.stack([X[:, idx[f"{m}_size"]] for m in FEATURE_NAMES], axis=1)
    dens = np.stack([X[:, idx[f"{m}_density"]] for m in FEATURE_NAMES], axis=1)
    edges = np.rint(dens * size * (size - 1) / 2.0)
    return {"mean_map_nodes": size.mean(axis=1), "mean_map_edges": edges.mean(axis=1)}


def cmd_stats(args, cfg: RunConfig):
    from .ml_harness import mann_whitney_u, two_proportion_z

    if args.test == "ztest":
        if None in (args.acc1, args.n1, args.acc2, args.n2):
            raise CliError("usage", "ztest needs --acc1 --n1 --acc2 --n2")
        try:
            z, p = two_proportion_z(args.acc1, args.n1, args.acc2, args.n2)
        except ValueError as exc:
            raise CliError("usage", str(exc)) from None
        text = json.dumps({"z": z, "p": p, "acc1": args.acc1, "n1": args.n1, "acc2": args.acc2, "n2": args.n2},
                          sort_keys=True)
        if args.out:
            Path(args.out).write_text(text + "\n")
        print(text)
        return None

    if not args.features or not args.manifest or not args.out:
        raise CliError("usage", "mwu needs --features, --manifest and --out")
    names, ids, X = _read_features(args.features)
    _, mrows = read_manifest(args.manifest, ("subject_id", "label"))
    labels = {r["subject_id"]: r["label"] for r in mrows}
    try:
        y = np.array([int(labels[s]) for s in ids])
    except KeyError as exc:
        raise CliError("malformed_manifest", f"subject {exc.args[0]!r} missing from manifest") from None
    except ValueError:
        raise CliError("malformed_manifest", "labels must be integers 0/1") from None
    cols = {n: X[:, i] for i, n in enumerate(names)}
    cols.update(node_edge_summary(names, X))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "mean_0", "mean_1", "u", "p"])
        for name, v in cols.items():
            u, p = mann_whitney_u(v[y == 1], v[y == 0])
            w.writerow([name, _fmt(v[y == 0].mean()), _fmt(v[y == 1].mean()), _fmt(u), _fmt(p)])
    return out


def cmd_plot(args, cfg: RunConfig):
    from .clustering import load_cluster_map
    from .glcm import FEATURE_NAMES, load_feature_map
    from .graph_builder import load_graph
    from .plotting import plot_graph, plot_map_overlay
    from .volume_io import load_mask, load_volume

    base, rows = read_manifest(args.manifest, ("subject_id",))
    row = next((r for r in rows if r["subject_id"] == args.subject), None)
    if row is None:
        raise CliError("usage", f"subject {args.subject!r} not in manifest")
    features = args.feature or list(FEATURE_NAMES)
    bad = [f for f in features if f not in FEATURE_NAMES]
    if bad:
        raise CliError("usage", f"unknown feature(s): {', '.join(bad)}")
    out = Path(args.out)
    sid = args.subject
    bg = load_volume(_abs(base, row["volume"])).values if row.get("volume") else None
    roi = load_mask(_abs(base, row["mask"])) if row.get("mask") else None
    made = []
    for f in features:
        if row.get("maps") and roi is not None:
            fm = load_feature_map(_abs(base, row["maps"]) / f"{f}.raw", roi)
            made.append(plot_map_overlay(fm.values, roi.flags, out / f"{sid}_{f}_map.png", bg, f))
        if row.get("clusters"):
            cm = load_cluster_map(_abs(base, row["clusters"]) / f"{f}.raw")
            made.append(plot_map_overlay(cm.labels, cm.mask, out / f"{sid}_{f}_clusters.png", bg,
                                         f"{f} clusters (u={cm.u})", discrete=True))
        if row.get("graphs"):
            g = load_graph(_abs(base, row["graphs"]) / f"{f}.json")
            made.append(plot_graph(g, out / f"{sid}_{f}_graph.png", f"{f}: {g.n_nodes} nodes, {g.n_edges} edges"))
    if not made:
        raise CliError("malformed_manifest", "manifest row has no maps, clusters or graphs to plot")
    return out


# --------------------------------------------------------------------------- #
# argument parsing


def _config_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="key=value config file")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--workers", type=int, help="subject-level worker processes")
    g.add_argument("--threads", type=int, help="threads for texture extraction within a subject")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="grrail", description="Graph-based radiomic heterogeneity descriptors.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    c = sub.add_parser("phantom-cohort", help="generate a seeded synthetic cohort")
    c.add_argument("--n", type=int, required=True, help="subjects per class")
    c.add_argument("--out", required=True)
    c.add_argument("--test-frac", type=float, default=0.25)
    c.add_argument("--shape", type=int, default=48, help="cubic volume edge length")
    c.add_argument("--semi-axes", default="14,12,10", help="ellipsoid semi-axes in voxels")
    _config_args(c)

    for name, helptext in (("resample", "resample volumes to isotropic spacing"),
                           ("extract", "compute the 13 texture maps"),
                           ("cluster", "GMM-cluster each texture map"),
                           ("graph", "build cluster graphs")):
        c = sub.add_parser(name, help=helptext)
        c.add_argument("--manifest", required=True)
        c.add_argument("--out", required=True)
        _config_args(c)

    c = sub.add_parser("descriptor", help="write descriptor CSVs")
    c.add_argument("--manifest", required=True)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--kind", action="append", help=f"one or more of {', '.join(DESCRIPTOR_KINDS)}")
    _config_args(c)

    c = sub.add_parser("classify", help="feature selection, CV and held-out evaluation")
    c.add_argument("--features", required=True)
    c.add_argument("--manifest", required=True)
    c.add_argument("--out", required=True)
    _config_args(c)

    c = sub.add_parser("stats", help="Mann-Whitney table or two-proportion z-test")
    c.add_argument("test", choices=("mwu", "ztest"))
    c.add_argument("--features")
    c.add_argument("--manifest")
    c.add_argument("--out")
    c.add_argument("--acc1", type=float)
    c.add_argument("--n1", type=int)
    c.add_argument("--acc2", type=float)
    c.add_argument("--n2", type=int)
    _config_args(c)

    c = sub.add_parser("plot", help="render map overlays and graphs for one subject")
    c.add_argument("--manifest", required=True)
    c.add_argument("--subject", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--feature", action="append", help="texture feature name (default: all 13)")
    _config_args(c)
    return p


def resolve_config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise CliError("config", f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for key in ("seed", "workers", "threads"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    try:
        if args.config:
            if not Path(args.config).is_file():
                raise CliError("missing_input", f"config file not found: {args.config}")
            return RunConfig.from_file(args.config, overrides)
        return RunConfig.from_mapping(overrides)
    except ConfigError as exc:
        raise CliError("config", str(exc)) from None


COMMANDS = {
    "phantom-cohort": cmd_phantom_cohort,
    "resample": cmd_resample,
    "extract": cmd_extract,
    "cluster": cmd_cluster,
    "graph": cmd_graph,
    "descriptor": cmd_descriptor,
    "classify": cmd_classify,
    "stats": cmd_stats,
    "plot": cmd_plot,
}


def _emit_error(kind: str, message: str, command: str | None):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "command": command}, sort_keys=True) + "\n")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        cfg = resolve_config(args)
        result = COMMANDS[command](args, cfg)
        if result is not None:
            print(str(result))
        return 0
    except CliError as exc:
        _emit_error(exc.kind, str(exc), command)
        return exc.code
    except SubjectError as exc:
        _emit_error("subject_failed", str(exc), command)
        return 1
    except (OSError, ValueError) as exc:
        _emit_error(type(exc).__name__, str(exc), command)
        return 1


if __name__ == "__main__":
    sys.exit(main())
