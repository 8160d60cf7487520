"""One-dimensional Gaussian mixtures fitted by EM, with BIC order selection.

Feature maps are clustered on their scalar values only. The selected mixture
turns a map ``f`` into a cluster map whose voxels carry their cluster's mean
feature value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .volume_io import save_raw

__all__ = [
    "GmmModel",
    "ClusterMap",
    "fit_gmm",
    "posterior",
    "bic",
    "cluster_values",
    "cluster_feature_map",
    "save_cluster_map",
    "load_cluster_map",
]

MAX_ITER = 300
REL_TOL = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float
    seed: int
    n_iter: int = 0
    converged: bool = True
    ll_trace: tuple = field(default=(), repr=False)

    @property
    def n_components(self) -> int:
        return len(self.means)


@dataclass(frozen=True, eq=False)
class ClusterMap:
    labels: np.ndarray          # (nx, ny, nz), -1 outside the ROI
    cluster_means: np.ndarray   # g value per cluster
    member_counts: np.ndarray
    bic_table: dict             # component count -> BIC
    seed: int

    @property
    def u(self) -> int:
        return len(self.cluster_means)

    @property
    def dims(self):
        return self.labels.shape

    @property
    def mask(self) -> np.ndarray:
        return self.labels >= 0

    def g_volume(self) -> np.ndarray:
        out = np.full(self.labels.shape, np.nan)
        inside = self.labels >= 0
        out[inside] = self.cluster_means[self.labels[inside]]
        return out


@numba.njit(cache=True)
def _em(x, w, mu, var, floor, max_iter, rel_tol):
    n = x.shape[0]
    m = mu.shape[0]
    resp = np.empty((n, m))
    logp = np.empty(m)
    half_prec = np.empty(m)
    nk = np.empty(m)
    sx = np.empty(m)
    ss = np.empty(m)
    trace = np.empty(max_iter + 1)

    def estep(w, mu, var):
        ll = 0.0
        for u in range(m):
            logp[u] = math.log(w[u]) - 0.5 * (_LOG_2PI + math.log(var[u]))
            half_prec[u] = 0.5 / var[u]
        for k in range(n):
            best = -np.inf
            xk = x[k]
            for u in range(m):
                d = xk - mu[u]
                t = logp[u] - d * d * half_prec[u]
                resp[k, u] = t
                if t > best:
                    best = t
            s = 0.0
            for u in range(m):
                e = math.exp(resp[k, u] - best)
                resp[k, u] = e
                s += e
            ll += best + math.log(s)
            inv = 1.0 / s
            for u in range(m):
                resp[k, u] *= inv
        return ll

    ll = estep(w, mu, var)
    trace[0] = ll
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        nk[:] = 0.0
        sx[:] = 0.0
        ss[:] = 0.0
        for k in range(n):
            xk = x[k]
            for u in range(m):
                r = resp[k, u]
                nk[u] += r
                sx[u] += r * xk
        for u in range(m):
            if nk[u] > 1e-12 * n:
                mu[u] = sx[u] / nk[u]
        for k in range(n):
            xk = x[k]
            for u in range(m):
                d = xk - mu[u]
                ss[u] += resp[k, u] * d * d
        for u in range(m):
            if nk[u] <= 1e-12 * n:
                # collapsed component: keep its location, give it negligible mass
                w[u] = 1e-12
            else:
                var[u] = max(ss[u] / nk[u], floor)
                w[u] = nk[u] / n
        tot = 0.0
        for u in range(m):
            tot += w[u]
        for u in range(m):
            w[u] /= tot
        new_ll = estep(w, mu, var)
        trace[it] = new_ll
        delta = abs(new_ll - ll)
        ll = new_ll
        if delta < rel_tol * max(abs(ll), 1e-300):
            converged = True
            break
    return ll, it, converged, trace[: it + 1]


def fit_gmm(samples, n_components: int, seed: int = 0, max_iter: int = MAX_ITER,
            rel_tol: float = REL_TOL) -> GmmModel:
    """Fit a 1-D Gaussian mixture by EM.

    Means start at evenly spaced sample quantiles with a small seeded jitter
    proportional to the sample spread; every variance is floored at
    ``1e-6 * var(samples) + 1e-12``. Components are returned in ascending
    order of mean.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    m = int(n_components)
    if m < 1:
        raise ValueError("n_components must be >= 1")
    if x.size < m:
        raise ValueError(f"fewer samples ({x.size}) than components ({m})")
    total_var = float(np.var(x))
    floor = 1e-6 * total_var + 1e-12

    if m == 1:
        mean = float(np.mean(x))
        var = max(total_var, floor)
        ll = float(-0.5 * (x.size * (_LOG_2PI + math.log(var)) + np.sum((x - mean) ** 2) / var))
        return GmmModel(np.ones(1), np.array([mean]), np.array([var]), ll, seed, 1, True, (ll,))

    rng = np.random.default_rng([seed, m])
    qs = (np.arange(m) + 0.5) / m
    mu = np.quantile(x, qs) + rng.normal(0.0, 1e-3 * math.sqrt(total_var), size=m)
    var = np.full(m, max(total_var / (m * m), floor))
    w = np.full(m, 1.0 / m)
    ll, n_iter, converged, trace = _em(x, w, mu, var, floor, max_iter, rel_tol)
    order = np.argsort(mu, kind="stable")
    return GmmModel(w[order], mu[order], var[order], float(ll), seed, int(n_iter), bool(converged),
                    tuple(trace.tolist()))


def _log_joint(model: GmmModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)[..., None]
    return (np.log(model.weights) - 0.5 * (_LOG_2PI + np.log(model.variances))
            - 0.5 * (x - model.means) ** 2 / model.variances)


def posterior(model: GmmModel, x):
    """Component responsibilities ``P(u | x)``; last axis indexes components."""
    lj = _log_joint(model, x)
    lj -= lj.max(axis=-1, keepdims=True)
    p = np.exp(lj)
    return p / p.sum(axis=-1, keepdims=True)


def bic(model: GmmModel, n: int) -> float:
    """``-2 lnL + (3M - 1) ln n``; lower is better."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = 3 * model.n_components - 1
    return -2.0 * model.log_likelihood + k * math.log(n)


def select_model(x: np.ndarray, u_max: int, seed: int) -> tuple[GmmModel, dict]:
    table = {}
    best = None
    for m in range(1, min(u_max, x.size) + 1):
        model = fit_gmm(x, m, seed)
        score = bic(model, x.size)
        table[m] = score
        if best is None or score < best[0]:
            best = (score, model)
    return best[1], table


def cluster_values(values: np.ndarray, mask: np.ndarray, u_max: int = 5, seed: int = 0) -> ClusterMap:
    """Cluster the ROI values of a volume; see ``cluster_feature_map``."""
    if u_max < 1:
        raise ValueError("u_max must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    x = np.asarray(values, dtype=np.float64)[mask]
    if x.size == 0:
        raise ValueError("empty ROI")
    model, table = select_model(x, u_max, seed)
    hard = np.argmax(posterior(model, x), axis=1)
    used = np.unique(hard)
    remap = np.full(model.n_components, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    lab = remap[hard]
    counts = np.bincount(lab, minlength=used.size)
    g = np.array([x[lab == c].mean() for c in range(used.size)])
    labels = np.full(mask.shape, -1, dtype=np.int64)
    labels[mask] = lab
    return ClusterMap(labels, g, counts, table, seed)


def cluster_feature_map(fmap, u_max: int = 5, seed: int = 0) -> ClusterMap:
    """Select the mixture order by BIC over ``1..u_max`` and hard-assign voxels.

    Voxels go to their highest-posterior component (lowest index on ties);
    empty components are dropped and the rest relabelled ``0..u-1`` in order
    of component mean.
    """
    return cluster_values(fmap.values, fmap.mask, u_max, seed)


def save_cluster_map(path, cm: ClusterMap, extra: dict | None = None) -> Path:
    path = Path(path)
    save_raw(path, cm.labels, dtype="int32")
    meta = {
        "u": cm.u,
        "g": [float(v) for v in cm.cluster_means],
        "member_counts": [int(c) for c in cm.member_counts],
        "bic": {str(k): float(v) for k, v in cm.bic_table.items()},
        "seed": cm.seed,
    }
    meta.update(extra or {})
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_cluster_map(path) -> ClusterMap:
    from .volume_io import _read_any

    path = Path(path)
    arr, _ = _read_any(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    return ClusterMap(
        arr.astype(np.int64),
        np.asarray(meta["g"], dtype=np.float64),
        np.asarray(meta["member_counts"], dtype=np.int64),
        {int(k): v for k, v in meta["bic"].items()},
        int(meta["seed"]),
    )
