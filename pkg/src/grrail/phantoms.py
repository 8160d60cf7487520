"""Synthetic lesion phantoms with known sub-region structure.

A phantom is an ellipsoidal ROI inside a cubic volume. Homogeneous phantoms
hold one smoothed Gaussian texture; heterogeneous phantoms are split into
``k`` Voronoi cells around seeded sites, each cell with its own mean,
texture amplitude and smoothing radius.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .volume_io import RoiMask, VoxelGrid

__all__ = ["RegionTexture", "PhantomSpec", "PhantomError", "generate_phantom", "sample_spec"]

HOMOGENEOUS, HETEROGENEOUS = "homogeneous", "heterogeneous"


class PhantomError(ValueError):
    pass


@dataclass(frozen=True)
class RegionTexture:
    mean: float
    std: float
    smoothing: float  # Gaussian sigma in voxels; 0 means white texture


@dataclass(frozen=True)
class PhantomSpec:
    kind: str
    regions: tuple[RegionTexture, ...]
    semi_axes: tuple[float, float, float] = (14.0, 12.0, 10.0)
    shape: tuple[int, int, int] = (48, 48, 48)
    noise: float = 0.0
    background: float = 0.0
    seed: int = 0
    min_separation: float = 3.0

    def __post_init__(self):
        if self.kind not in (HOMOGENEOUS, HETEROGENEOUS):
            raise PhantomError(f"unknown phantom class {self.kind!r}")
        k = len(self.regions)
        if not 1 <= k <= 5:
            raise PhantomError("region count must be in 1..5")
        if self.kind == HOMOGENEOUS and k != 1:
            raise PhantomError("homogeneous phantoms have exactly one region")
        if self.kind == HETEROGENEOUS:
            if k < 3:
                raise PhantomError("heterogeneous phantoms need at least 3 regions")
            pooled = math.sqrt(sum(r.std ** 2 for r in self.regions) / k)
            for a, b in itertools.combinations(self.regions, 2):
                if abs(a.mean - b.mean) < self.min_separation * pooled:
                    raise PhantomError(
                        f"region means {a.mean:g} and {b.mean:g} closer than "
                        f"{self.min_separation:g} pooled std ({pooled:g})"
                    )
        if any(r.std < 0 or r.smoothing < 0 for r in self.regions) or self.noise < 0:
            raise PhantomError("std, smoothing and noise must be non-negative")

    @property
    def label(self) -> int:
        return int(self.kind == HETEROGENEOUS)


def _ellipsoid(shape, semi_axes) -> np.ndarray:
    c = [(n - 1) / 2.0 for n in shape]
    grids = np.meshgrid(*[np.arange(n) - ci for n, ci in zip(shape, c)], indexing="ij")
    r2 = sum((g / a) ** 2 for g, a in zip(grids, semi_axes))
    return r2 <= 1.0


def _texture(rng, shape, region: RegionTexture) -> np.ndarray:
    white = rng.standard_normal(shape)
    if region.smoothing > 0:
        white = gaussian_filter(white, region.smoothing, mode="reflect")
        sd = white.std()
        if sd > 0:
            white = white / sd
    return region.mean + region.std * white


def generate_phantom(spec: PhantomSpec) -> tuple[VoxelGrid, RoiMask, int]:
    """Render ``spec`` to a (grid, mask, label) triple; identical for identical specs."""
    rng = np.random.default_rng(spec.seed)
    roi = _ellipsoid(spec.shape, spec.semi_axes)
    k = len(spec.regions)
    n_roi = int(roi.sum())
    if min(spec.semi_axes) < 3 or n_roi < 125 * k:
        raise PhantomError(f"semi-axes {spec.semi_axes} too small to host {k} region(s)")

    vol = np.full(spec.shape, float(spec.background))
    if k == 1:
        vol[roi] = _texture(rng, spec.shape, spec.regions[0])[roi]
    else:
        pts = np.argwhere(roi)
        for _ in range(100):
            sites = pts[rng.choice(len(pts), size=k, replace=False)].astype(float)
            d = ((pts[:, None, :] - sites[None, :, :]) ** 2).sum(axis=2)
            owner = np.argmin(d, axis=1)
            if np.bincount(owner, minlength=k).min() >= n_roi // (2 * k):
                break
        else:
            raise PhantomError(f"could not place {k} balanced Voronoi cells")
        labels = np.full(spec.shape, -1)
        labels[roi] = owner
        for r, region in enumerate(spec.regions):
            tex = _texture(rng, spec.shape, region)
            cell = labels == r
            vol[cell] = tex[cell]
    if spec.noise > 0:
        vol[roi] += spec.noise * rng.standard_normal(n_roi)
    return VoxelGrid(vol, (1.0, 1.0, 1.0)), RoiMask(roi), spec.label


def sample_spec(label: int, seed: int, shape=(48, 48, 48), semi_axes=(14.0, 12.0, 10.0)) -> PhantomSpec:
    """Draw a random cohort member of class ``label`` (0 homogeneous, 1 heterogeneous).

    Homogeneous lesions get one broad, smooth texture. Heterogeneous lesions
    get 3-5 cells whose means sit 5 pooled std apart and whose texture
    amplitude and grain differ from cell to cell.
    """
    rng = np.random.default_rng([seed, 7])
    base = float(rng.uniform(80, 120))
    if label == 0:
        region = RegionTexture(base, float(rng.uniform(8, 12)), float(rng.uniform(2.0, 3.0)))
        return PhantomSpec(HOMOGENEOUS, (region,), semi_axes, shape, noise=0.5, seed=seed)
    k = int(rng.integers(3, 6))
    # textures spread from fine to coarse grain so neighbouring cells differ
    stds = rng.permutation(np.linspace(3.0, 8.0, k))
    grains = rng.permutation(np.linspace(0.0, 2.5, k))
    pooled = math.sqrt(float((stds ** 2).mean()))
    order = rng.permutation(k)
    regions = tuple(
        RegionTexture(base + 5.0 * pooled * float(order[i]), float(stds[i]), float(grains[i]))
        for i in range(k)
    )
    return PhantomSpec(HETEROGENEOUS, regions, semi_axes, shape, noise=0.5, seed=seed)
