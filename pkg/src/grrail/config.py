"""Run configuration: a flat dataclass read from ``key=value`` files."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .graph_builder import EDGE_POLICIES, WEIGHT_POLICIES

DESCRIPTOR_KINDS = ("grrail", "radiomics", "intensity")


class ConfigError(ValueError):
    pass


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a master seed and any labels (subject id, map name...)."""
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


@dataclass(frozen=True)
class RunConfig:
    # texture
    bins: int = 16
    min_roi_voxels: int = 27
    # clustering / graphs
    u_max: int = 5
    intensity_u_max: int = 5
    edge_policy: str = "rag26"
    weight_policy: str = "emd"
    hist_bins: int = 32
    # preprocessing
    target_mm: float = 1.0
    interp: str = "trilinear"
    # randomness / parallelism
    seed: int = 0
    workers: int = 1
    threads: int = 1
    kinds: tuple = ("grrail",)
    # classifier
    n_trees: int = 500
    max_depth: int | None = None
    min_leaf: int = 2
    target_k: int = 20
    corr_threshold: float = 0.95
    rfe_step: float = 0.1
    folds: int = 5
    n_permutations: int = 20
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        checks = [
            (self.bins >= 2, "bins must be >= 2"),
            (self.min_roi_voxels >= 1, "min_roi_voxels must be >= 1"),
            (1 <= self.u_max <= 12, "u_max must be in 1..12"),
            (1 <= self.intensity_u_max <= 12, "intensity_u_max must be in 1..12"),
            (self.edge_policy in EDGE_POLICIES, f"edge_policy must be one of {EDGE_POLICIES}"),
            (self.weight_policy in WEIGHT_POLICIES, f"weight_policy must be one of {WEIGHT_POLICIES}"),
            (self.hist_bins >= 1, "hist_bins must be >= 1"),
            (self.target_mm > 0, "target_mm must be positive"),
            (self.interp in ("trilinear", "nearest"), "interp must be trilinear or nearest"),
            (self.workers >= 1 and self.threads >= 1, "workers and threads must be >= 1"),
            (all(k in DESCRIPTOR_KINDS for k in self.kinds), f"kinds must be drawn from {DESCRIPTOR_KINDS}"),
            (self.n_trees >= 1, "n_trees must be >= 1"),
            (self.max_depth is None or self.max_depth >= 1, "max_depth must be >= 1"),
            (self.min_leaf >= 1, "min_leaf must be >= 1"),
            (self.target_k >= 1, "target_k must be >= 1"),
            (0 < self.corr_threshold <= 1, "corr_threshold must be in (0, 1]"),
            (0 < self.rfe_step < 1, "rfe_step must be in (0, 1)"),
            (self.folds >= 2, "folds must be >= 2"),
            (self.n_permutations >= 1, "n_permutations must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("extra")
        d["kinds"] = list(self.kinds)
        return d

    @classmethod
    def from_mapping(cls, items: dict, base: "RunConfig | None" = None) -> "RunConfig":
        base = base or cls()
        types = {f.name: f for f in dataclasses.fields(cls)}
        changes = {}
        for key, raw in items.items():
            key = key.strip().replace("-", "_")
            if key not in types or key == "extra":
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _coerce(key, raw, getattr(base, key))
        return dataclasses.replace(base, **changes)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        items = {}
        for n, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            items[k.strip()] = v.strip()
        cfg = cls.from_mapping(items)
        return cls.from_mapping(overrides, cfg) if overrides else cfg


def _coerce(key, raw, current):
    if not isinstance(raw, str):
        return tuple(raw) if key == "kinds" else raw
    try:
        if key == "kinds":
            return tuple(k.strip() for k in raw.split(",") if k.strip())
        if key == "max_depth":
            return None if raw.lower() in ("none", "") else int(raw)
        if isinstance(current, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw
