"""Voxel-wise Haralick texture maps from a 3x3x3 co-occurrence window.

Each ROI voxel gets one grey-level co-occurrence matrix pooled over the 13
unique distance-1 directions in 3-D, counted symmetrically, using only voxel
pairs that lie inside both the window and the ROI. Thirteen Haralick
statistics of that matrix form the voxel's entry in the 13 feature maps.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .volume_io import RoiMask, VolumeError, VoxelGrid, load_volume, save_raw, validate_pair

__all__ = [
    "FEATURE_NAMES",
    "OFFSETS",
    "QuantizedRoi",
    "FeatureMap",
    "quantize_roi",
    "window_cooc",
    "haralick13",
    "extract_feature_maps",
    "save_feature_map",
    "load_feature_map",
]

FEATURE_NAMES = (
    "energy",
    "entropy",
    "contrast",
    "correlation",
    "homogeneity",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "difference_entropy",
    "difference_average",
    "difference_variance",
    "imc1",
    "imc2",
)

OFFSETS = np.array(
    [
        (1, 0, 0), (0, 1, 0), (0, 0, 1),
        (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1),
        (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
    ],
    dtype=np.int64,
)

WINDOW = 3
_OUTSIDE = -1


@dataclass(frozen=True, eq=False)
class QuantizedRoi:
    """Grey levels in ``[0, bins-1]`` on ROI voxels, ``-1`` elsewhere."""

    levels: np.ndarray
    bins: int

    @property
    def dims(self):
        return self.levels.shape

    @property
    def mask(self) -> np.ndarray:
        return self.levels >= 0


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """One texture feature sampled on the ROI; NaN outside it."""

    name: str
    values: np.ndarray
    mask: np.ndarray
    bins: int
    window: int = WINDOW

    @property
    def dims(self):
        return self.values.shape

    def roi_values(self) -> np.ndarray:
        return self.values[self.mask]


def quantize_roi(grid: VoxelGrid, mask: RoiMask, bins: int = 16) -> QuantizedRoi:
    """Equal-width binning of ``[min, max]`` over the ROI; a constant ROI maps to 0."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    validate_pair(grid, mask)
    vals = grid.values[mask.flags]
    lo, hi = vals.min(), vals.max()
    levels = np.full(grid.dims, _OUTSIDE, dtype=np.int64)
    if hi > lo:
        q = np.floor((vals - lo) / (hi - lo) * bins).astype(np.int64)
        levels[mask.flags] = np.clip(q, 0, bins - 1)
    else:
        levels[mask.flags] = 0
    return QuantizedRoi(levels, int(bins))


# --------------------------------------------------------------------------- #
# numba kernels


@numba.njit(cache=True, nogil=True)
def _count_window(levels, cx, cy, cz, offsets, counts):
    """Accumulate symmetric pair counts for the window at (cx, cy, cz)."""
    nx, ny, nz = levels.shape
    total = 0
    for ax in range(cx - 1, cx + 2):
        if ax < 0 or ax >= nx:
            continue
        for ay in range(cy - 1, cy + 2):
            if ay < 0 or ay >= ny:
                continue
            for az in range(cz - 1, cz + 2):
                if az < 0 or az >= nz:
                    continue
                la = levels[ax, ay, az]
                if la < 0:
                    continue
                for o in range(offsets.shape[0]):
                    bx = ax + offsets[o, 0]
                    by = ay + offsets[o, 1]
                    bz = az + offsets[o, 2]
                    if abs(bx - cx) > 1 or abs(by - cy) > 1 or abs(bz - cz) > 1:
                        continue
                    if bx < 0 or bx >= nx or by < 0 or by >= ny or bz < 0 or bz >= nz:
                        continue
                    lb = levels[bx, by, bz]
                    if lb < 0:
                        continue
                    counts[la, lb] += 1.0
                    counts[lb, la] += 1.0
                    total += 2
    return total


@numba.njit(cache=True, nogil=True)
def _plogp(p):
    if p > 0.0:
        return p * math.log2(p)
    return 0.0


@numba.njit(cache=True, nogil=True)
def _haralick_kernel(p, px, py, psum, pdiff, out):
    """Fill ``out[0:13]`` from a normalised matrix ``p``; scratch arrays are reused."""
    nb = p.shape[0]
    px[:] = 0.0
    py[:] = 0.0
    psum[:] = 0.0
    pdiff[:] = 0.0
    energy = 0.0
    hxy = 0.0
    contrast = 0.0
    homog = 0.0
    for i in range(nb):
        for j in range(nb):
            v = p[i, j]
            if v == 0.0:
                continue
            px[i] += v
            py[j] += v
            psum[i + j] += v
            pdiff[abs(i - j)] += v
            d2 = (i - j) * (i - j)
            energy += v * v
            hxy -= _plogp(v)
            contrast += d2 * v
            homog += v / (1.0 + d2)

    mux = 0.0
    muy = 0.0
    for i in range(nb):
        mux += i * px[i]
        muy += i * py[i]
    varx = 0.0
    vary = 0.0
    hx = 0.0
    hy = 0.0
    for i in range(nb):
        varx += (i - mux) * (i - mux) * px[i]
        vary += (i - muy) * (i - muy) * py[i]
        hx -= _plogp(px[i])
        hy -= _plogp(py[i])

    cov = 0.0
    hxy1 = 0.0
    for i in range(nb):
        for j in range(nb):
            v = p[i, j]
            if v == 0.0:
                continue
            cov += (i - mux) * (j - muy) * v
            hxy1 -= v * math.log2(px[i] * py[j])
    hxy2 = 0.0
    for i in range(nb):
        if px[i] == 0.0:
            continue
        for j in range(nb):
            if py[j] == 0.0:
                continue
            q = px[i] * py[j]
            hxy2 -= q * math.log2(q)
    sd = math.sqrt(varx) * math.sqrt(vary)
    corr = cov / sd if sd > 1e-15 else 0.0

    sum_avg = 0.0
    sum_ent = 0.0
    for k in range(psum.shape[0]):
        sum_avg += k * psum[k]
        sum_ent -= _plogp(psum[k])
    sum_var = 0.0
    for k in range(psum.shape[0]):
        sum_var += (k - sum_avg) * (k - sum_avg) * psum[k]
    diff_avg = 0.0
    diff_ent = 0.0
    for k in range(nb):
        diff_avg += k * pdiff[k]
        diff_ent -= _plogp(pdiff[k])
    diff_var = 0.0
    for k in range(nb):
        diff_var += (k - diff_avg) * (k - diff_avg) * pdiff[k]

    hmax = max(hx, hy)
    imc1 = (hxy - hxy1) / hmax if hmax > 0.0 else 0.0
    imc2 = math.sqrt(max(0.0, 1.0 - math.exp(-2.0 * (hxy2 - hxy))))

    out[0] = energy
    out[1] = hxy
    out[2] = contrast
    out[3] = corr
    out[4] = homog
    out[5] = sum_avg
    out[6] = sum_var
    out[7] = sum_ent
    out[8] = diff_ent
    out[9] = diff_avg
    out[10] = diff_var
    out[11] = imc1
    out[12] = imc2


@numba.njit(cache=True, nogil=True)
def _extract_kernel(levels, coords, bins, offsets, out):
    counts = np.zeros((bins, bins))
    px = np.empty(bins)
    py = np.empty(bins)
    psum = np.empty(2 * bins - 1)
    pdiff = np.empty(bins)
    for n in range(coords.shape[0]):
        cx, cy, cz = coords[n, 0], coords[n, 1], coords[n, 2]
        counts[:, :] = 0.0
        total = _count_window(levels, cx, cy, cz, offsets, counts)
        if total == 0:
            lvl = levels[cx, cy, cz]
            counts[lvl, lvl] = 1.0
        else:
            inv = 1.0 / total
            for i in range(bins):
                for j in range(bins):
                    counts[i, j] *= inv
        _haralick_kernel(counts, px, py, psum, pdiff, out[n])


# --------------------------------------------------------------------------- #
# public API


def window_cooc(q: QuantizedRoi, center) -> np.ndarray:
    """Normalised pooled co-occurrence matrix of the 3x3x3 window at ``center``.

    A window with no in-ROI pairs yields a delta at the centre's own level.
    """
    cx, cy, cz = (int(c) for c in center)
    nx, ny, nz = q.levels.shape
    if not (0 <= cx < nx and 0 <= cy < ny and 0 <= cz < nz) or q.levels[cx, cy, cz] < 0:
        raise ValueError(f"center {tuple(center)} is not an ROI voxel")
    counts = np.zeros((q.bins, q.bins))
    total = _count_window(q.levels, cx, cy, cz, OFFSETS, counts)
    if total == 0:
        lvl = q.levels[cx, cy, cz]
        counts[lvl, lvl] = 1.0
        return counts
    return counts / total


def haralick13(p: np.ndarray) -> np.ndarray:
    """The 13 Haralick statistics of a normalised co-occurrence matrix, in ``FEATURE_NAMES`` order.

    Logs are base 2 with ``0 log 0 = 0``. Correlation is 0 when either
    marginal has zero variance and IMC1 is 0 when both marginal entropies vanish.
    """
    p = np.ascontiguousarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("co-occurrence matrix must be square")
    nb = p.shape[0]
    out = np.empty(13)
    _haralick_kernel(p, np.empty(nb), np.empty(nb), np.empty(2 * nb - 1), np.empty(nb), out)
    return out


def extract_feature_maps(grid: VoxelGrid, mask: RoiMask, bins: int = 16, threads: int = 1,
                         chunk: int = 4096) -> list[FeatureMap]:
    """Compute the 13 voxel-wise texture maps over the ROI.

    Work is split into fixed chunks of ROI voxels; every voxel writes its own
    output row, so any ``threads`` value gives bit-identical maps.
    """
    q = quantize_roi(grid, mask, bins)
    coords = np.argwhere(mask.flags).astype(np.int64)
    feats = np.empty((coords.shape[0], 13))
    bounds = [(s, min(s + chunk, len(coords))) for s in range(0, len(coords), chunk)]

    def run(span):
        s, e = span
        _extract_kernel(q.levels, coords[s:e], q.bins, OFFSETS, feats[s:e])

    if threads <= 1 or len(bounds) == 1:
        for span in bounds:
            run(span)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, bounds))

    maps = []
    for f, name in enumerate(FEATURE_NAMES):
        vol = np.full(grid.dims, np.nan)
        vol[mask.flags] = feats[:, f]
        maps.append(FeatureMap(name, vol, mask.flags, q.bins))
    return maps


def save_feature_map(path, fmap: FeatureMap, source_hash: str = "") -> Path:
    """Persist a map as raw volume (0 outside the ROI) plus a JSON sidecar."""
    path = Path(path)
    save_raw(path, np.where(fmap.mask, fmap.values, 0.0))
    meta = {"feature": fmap.name, "bins": fmap.bins, "window": fmap.window, "source_hash": source_hash}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_feature_map(path, mask: RoiMask) -> FeatureMap:
    path = Path(path)
    grid = load_volume(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if grid.dims != mask.dims:
        raise VolumeError(f"dims mismatch: map {grid.dims} vs mask {mask.dims}")
    vals = np.where(mask.flags, grid.values, np.nan)
    return FeatureMap(meta["feature"], vals, mask.flags, int(meta["bins"]), int(meta.get("window", WINDOW)))
