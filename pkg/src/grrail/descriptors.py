"""Per-subject descriptors: GrRAiL (195), aggregate radiomics (65), intensity graph (15)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterMap, cluster_feature_map, cluster_values
from .config import RunConfig, derive_seed
from .glcm import FEATURE_NAMES, FeatureMap, extract_feature_maps
from .graph_builder import ClusterGraph, build_graph
from .graph_metrics import METRIC_NAMES, graph_features
from .volume_io import RoiMask, VoxelGrid, validate_pair, volume_hash

__all__ = [
    "RoiTooSmallError",
    "Descriptor",
    "GRRAIL_NAMES",
    "RADIOMICS_NAMES",
    "INTENSITY_NAMES",
    "STAT_NAMES",
    "grrail",
    "grrail_from_graphs",
    "radiomics_aggregate",
    "radiomics_from_maps",
    "intensity_graph",
    "map_graph",
    "describe",
]

STAT_NAMES = ("mean", "median", "std", "kurtosis", "skewness")
GRRAIL_NAMES = tuple(f"{m}_{q}" for m in FEATURE_NAMES for q in METRIC_NAMES)
RADIOMICS_NAMES = tuple(f"{m}_{s}" for m in FEATURE_NAMES for s in STAT_NAMES)
INTENSITY_NAMES = tuple(f"intensity_{q}" for q in METRIC_NAMES)
_LENGTHS = {"grrail": 195, "radiomics": 65, "intensity": 15}
_NAMES = {"grrail": GRRAIL_NAMES, "radiomics": RADIOMICS_NAMES, "intensity": INTENSITY_NAMES}


class RoiTooSmallError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Descriptor:
    kind: str
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.values) != _LENGTHS[self.kind]:
            raise AssertionError(f"{self.kind} descriptor must have {_LENGTHS[self.kind]} values, got {len(self.values)}")
        if not np.all(np.isfinite(self.values)):
            raise AssertionError(f"non-finite values in {self.kind} descriptor")

    @property
    def names(self) -> tuple:
        return _NAMES[self.kind]

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))


def _check(grid: VoxelGrid, mask: RoiMask, cfg: RunConfig) -> int:
    n = validate_pair(grid, mask)
    if n < cfg.min_roi_voxels:
        raise RoiTooSmallError(f"ROI has {n} voxels, fewer than min_roi_voxels={cfg.min_roi_voxels}")
    return n


def _provenance(grid, cfg: RunConfig, seed: int) -> dict:
    return {
        "bins": cfg.bins,
        "u_max": cfg.u_max,
        "edge_policy": cfg.edge_policy,
        "weight_policy": cfg.weight_policy,
        "hist_bins": cfg.hist_bins,
        "seed": seed,
        "source_hash": volume_hash(grid),
    }


def map_graph(fmap: FeatureMap, cfg: RunConfig, seed: int) -> tuple[ClusterMap, ClusterGraph]:
    cm = cluster_feature_map(fmap, cfg.u_max, derive_seed(seed, fmap.name))
    return cm, build_graph(cm, fmap, cfg.edge_policy, cfg.hist_bins, cfg.weight_policy)


def grrail_from_graphs(graphs: list[ClusterGraph], provenance: dict | None = None) -> Descriptor:
    if len(graphs) != len(FEATURE_NAMES):
        raise ValueError(f"expected {len(FEATURE_NAMES)} graphs, got {len(graphs)}")
    vals = np.concatenate([graph_features(g) for g in graphs])
    return Descriptor("grrail", vals, provenance or {})


def grrail(grid: VoxelGrid, mask: RoiMask, cfg: RunConfig | None = None, seed: int | None = None,
           maps: list[FeatureMap] | None = None, keep: dict | None = None) -> Descriptor:
    """GrRAiL descriptor: 13 maps -> per-map GMM clusters -> cluster graph -> 15 metrics each.

    Pass ``keep={}`` to receive the intermediate maps, cluster maps and graphs.
    """
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    _check(grid, mask, cfg)
    if maps is None:
        maps = extract_feature_maps(grid, mask, cfg.bins, cfg.threads)
    clusters, graphs = [], []
    for fmap in maps:
        cm, g = map_graph(fmap, cfg, seed)
        clusters.append(cm)
        graphs.append(g)
    if keep is not None:
        keep.update(maps=maps, clusters=clusters, graphs=graphs)
    return grrail_from_graphs(graphs, _provenance(grid, cfg, seed))


def _five_stats(x: np.ndarray) -> list[float]:
    mean = float(x.mean())
    median = float(np.median(x))
    if np.ptp(x) == 0:
        return [mean, median, 0.0, 0.0, 0.0]
    d = x - mean
    m2 = float((d * d).mean())
    m3 = float((d ** 3).mean())
    m4 = float((d ** 4).mean())
    return [mean, median, m2 ** 0.5, m4 / (m2 * m2) - 3.0, m3 / m2 ** 1.5]


def radiomics_from_maps(maps: list[FeatureMap], provenance: dict | None = None) -> Descriptor:
    """Mean, median, population std, excess kurtosis and skewness of each map over the ROI."""
    vals = np.array([v for fmap in maps for v in _five_stats(fmap.roi_values())])
    return Descriptor("radiomics", vals, provenance or {})


def radiomics_aggregate(grid: VoxelGrid, mask: RoiMask, cfg: RunConfig | None = None,
                        maps: list[FeatureMap] | None = None) -> Descriptor:
    cfg = cfg or RunConfig()
    _check(grid, mask, cfg)
    if maps is None:
        maps = extract_feature_maps(grid, mask, cfg.bins, cfg.threads)
    return radiomics_from_maps(maps, _provenance(grid, cfg, cfg.seed))


def intensity_graph(grid: VoxelGrid, mask: RoiMask, cfg: RunConfig | None = None, seed: int | None = None,
                    keep: dict | None = None) -> Descriptor:
    """Graph metrics of the GMM clusters of raw ROI intensities (no texture maps)."""
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    _check(grid, mask, cfg)
    vals = np.where(mask.flags, grid.values, np.nan)
    fmap = FeatureMap("intensity", vals, mask.flags, 0)
    cm = cluster_values(vals, mask.flags, cfg.intensity_u_max, derive_seed(seed, "intensity"))
    g = build_graph(cm, fmap, cfg.edge_policy, cfg.hist_bins, cfg.weight_policy)
    if keep is not None:
        keep.update(intensity_cluster=cm, intensity_graph=g)
    prov = _provenance(grid, cfg, seed)
    prov["u_max"] = cfg.intensity_u_max
    return Descriptor("intensity", graph_features(g), prov)


def describe(grid: VoxelGrid, mask: RoiMask, cfg: RunConfig, seed: int, kinds=None) -> dict[str, Descriptor]:
    """Compute every requested descriptor kind, sharing the texture maps."""
    kinds = tuple(kinds or cfg.kinds)
    out = {}
    maps = None
    if "grrail" in kinds or "radiomics" in kinds:
        _check(grid, mask, cfg)
        maps = extract_feature_maps(grid, mask, cfg.bins, cfg.threads)
    if "grrail" in kinds:
        out["grrail"] = grrail(grid, mask, cfg, seed, maps=maps)
    if "radiomics" in kinds:
        out["radiomics"] = radiomics_aggregate(grid, mask, cfg, maps=maps)
    if "intensity" in kinds:
        out["intensity"] = intensity_graph(grid, mask, cfg, seed)
    return out
