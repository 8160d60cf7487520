"""Feature selection, random-forest classification and the statistical tests.

Forests are scikit-learn ``RandomForestClassifier`` instances. Selection,
cross-validation, AUC, the Mann-Whitney U test, the two-proportion z-test and
permutation importance are implemented here.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import RandomForestClassifier
from sklearn.model_selection import StratifiedKFold

from .config import RunConfig, derive_seed

log = logging.getLogger(__name__)

__all__ = [
    "CohortTable",
    "EvalReport",
    "auc",
    "mann_whitney_u",
    "two_proportion_z",
    "train_forest",
    "predict_proba",
    "select_features",
    "permutation_importance",
    "cross_validate",
    "stratified_folds",
]


@dataclass(frozen=True, eq=False)
class CohortTable:
    ids: list
    X: np.ndarray
    y: np.ndarray
    split: np.ndarray
    names: list

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y).astype(np.int64)
        if X.ndim != 2 or X.shape[0] != len(y) or X.shape[1] != len(self.names):
            raise ValueError("table shape does not match ids/labels/feature names")
        if not set(np.unique(y)) <= {0, 1}:
            raise ValueError("labels must be 0/1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "split", np.asarray(self.split, dtype=object))

    @property
    def train_idx(self) -> np.ndarray:
        return np.flatnonzero(self.split == "train")

    @property
    def test_idx(self) -> np.ndarray:
        return np.flatnonzero(self.split == "test")

    @classmethod
    def from_csv(cls, features_csv, manifest_csv) -> "CohortTable":
        """Join a descriptor CSV (id + features) with a manifest (label, split)."""
        with open(features_csv, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        with open(manifest_csv, newline="") as fh:
            meta = {r["subject_id"]: r for r in csv.DictReader(fh)}
        ids, X, y, split = [], [], [], []
        for r in body:
            sid = r[0]
            if sid not in meta:
                raise ValueError(f"subject {sid!r} missing from manifest")
            ids.append(sid)
            X.append([float(v) for v in r[1:]])
            y.append(int(meta[sid]["label"]))
            split.append(meta[sid].get("split", "train") or "train")
        return cls(ids, np.array(X), np.array(y), np.array(split, dtype=object), header[1:])


@dataclass
class EvalReport:
    cv_accuracy_mean: float
    cv_accuracy_std: float
    cv_fold_accuracies: list
    cv_auc: float
    test_accuracy: float | None
    test_auc: float | None
    selected_features: list
    importances: dict
    fold_selected: list = field(default_factory=list)
    test_predictions: list = field(default_factory=list)

    @property
    def auc(self) -> float:
        return self.test_auc if self.test_auc is not None else self.cv_auc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["auc"] = self.auc
        return d


# --------------------------------------------------------------------------- #
# statistics


def auc(scores, labels) -> float:
    """ROC AUC as P(score+ > score-) + P(tie)/2."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n1, n0 = int(y.sum()), int((~y).sum())
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def mann_whitney_u(x, y) -> tuple[float, float]:
    """U statistic of ``x`` and its two-sided normal-approximation p-value.

    U counts pairs with x > y plus half the ties. The p-value uses midranks,
    the tie-corrected variance and a 0.5 continuity correction.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    ranks = rankdata(np.concatenate([x, y]))
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    n = n1 + n2
    _, t = np.unique(ranks, return_counts=True)
    tie = float((t ** 3 - t).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return u, 1.0
    z = max(abs(u - n1 * n2 / 2.0) - 0.5, 0.0) / math.sqrt(var)
    return u, min(1.0, math.erfc(z / math.sqrt(2.0)))


def two_proportion_z(acc1: float, n1: int, acc2: float, n2: int) -> tuple[float, float]:
    """Pooled two-proportion z-test on two accuracies; returns (z, two-sided p)."""
    if n1 < 1 or n2 < 1:
        raise ValueError("group sizes must be >= 1")
    if not (0 <= acc1 <= 1 and 0 <= acc2 <= 1):
        raise ValueError("accuracies must lie in [0, 1]")
    pooled = (round(acc1 * n1) + round(acc2 * n2)) / (n1 + n2)
    if pooled <= 0 or pooled >= 1:
        log.warning("pooled proportion is %g; z-test undefined, reporting z=0", pooled)
        return 0.0, 1.0
    z = (acc1 - acc2) / math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    return z, math.erfc(abs(z) / math.sqrt(2.0))


# --------------------------------------------------------------------------- #
# forests


def train_forest(X, y, cfg: RunConfig | None = None, seed: int = 0, bootstrap: bool = True) -> RandomForestClassifier:
    cfg = cfg or RunConfig()
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise ValueError("training data contains a single class")
    model = RandomForestClassifier(
        n_estimators=cfg.n_trees,
        max_features="sqrt",
        max_depth=cfg.max_depth,
        min_samples_leaf=cfg.min_leaf,
        bootstrap=bootstrap,
        random_state=seed % (2 ** 32),
        n_jobs=cfg.workers,
    )
    return model.fit(np.asarray(X, dtype=np.float64), y)


def predict_proba(model: RandomForestClassifier, X) -> np.ndarray:
    """Mean leaf probability of class 1 across trees."""
    proba = model.predict_proba(np.asarray(X, dtype=np.float64))
    col = list(model.classes_).index(1) if 1 in model.classes_ else None
    return proba[:, col] if col is not None else np.zeros(len(proba))


def select_features(X, y, target_k: int = 20, seed: int = 0, cfg: RunConfig | None = None,
                    names=None) -> list[int]:
    """Correlation pre-filter followed by recursive elimination; returns column indices.

    Constant columns go first. Then, scanning columns in order, a column is
    dropped when ``|r| > corr_threshold`` against an already kept one. Finally
    a forest is refit and the ``rfe_step`` fraction with the lowest impurity
    importance removed until at most ``target_k`` remain.
    """
    cfg = cfg or RunConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] < 10:
        raise ValueError("feature selection needs at least 10 training rows")
    names = list(names) if names is not None else [str(i) for i in range(X.shape[1])]

    constant = np.ptp(X, axis=0) == 0
    if constant.any():
        log.warning("dropping %d constant feature(s): %s", int(constant.sum()),
                    ", ".join(names[i] for i in np.flatnonzero(constant)[:10]))
    cand = np.flatnonzero(~constant)
    if cand.size == 0:
        return []
    corr = np.corrcoef(X[:, cand], rowvar=False).reshape(cand.size, cand.size)
    kept: list[int] = []
    for a in range(cand.size):
        if all(abs(corr[a, b]) <= cfg.corr_threshold for b in kept):
            kept.append(a)
    sel = [int(cand[a]) for a in kept]

    rnd = 0
    while len(sel) > target_k:
        model = train_forest(X[:, sel], y, cfg, derive_seed(seed, "rfe", rnd))
        imp = model.feature_importances_
        n_drop = min(max(1, int(cfg.rfe_step * len(sel))), len(sel) - target_k)
        order = sorted(range(len(sel)), key=lambda i: (imp[i], i))
        drop = set(order[:n_drop])
        sel = [c for i, c in enumerate(sel) if i not in drop]
        rnd += 1
    return sel


def permutation_importance(model, X, y, seed: int = 0, n_repeats: int = 20) -> np.ndarray:
    """Mean accuracy drop when each column is shuffled, over ``n_repeats`` seeded shuffles."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    rng = np.random.default_rng(seed % (2 ** 63))
    base = float((model.predict(X) == y).mean())
    out = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        drops = []
        for _ in range(n_repeats):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(len(X)), j]
            drops.append(base - float((model.predict(Xp) == y).mean()))
        out[j] = float(np.mean(drops))
    return out


def stratified_folds(y, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed % (2 ** 32))
    return list(skf.split(np.zeros(len(y)), y))


def cross_validate(table: CohortTable, cfg: RunConfig | None = None, seed: int | None = None) -> EvalReport:
    """Stratified k-fold CV with selection refit inside each fold, then one refit for the test split."""
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    tr = table.train_idx
    X, y = table.X[tr], table.y[tr]
    if min(int((y == 0).sum()), int((y == 1).sum())) < cfg.folds:
        raise ValueError(f"need at least {cfg.folds} training subjects per class")

    oof = np.zeros(len(tr))
    accs, fold_sel = [], []
    for k, (fit_i, val_i) in enumerate(stratified_folds(y, cfg.folds, derive_seed(seed, "folds"))):
        fseed = derive_seed(seed, "fold", k)
        sel = select_features(X[fit_i], y[fit_i], cfg.target_k, fseed, cfg, table.names)
        model = train_forest(X[np.ix_(fit_i, sel)], y[fit_i], cfg, fseed)
        p = predict_proba(model, X[np.ix_(val_i, sel)])
        oof[val_i] = p
        accs.append(float(((p >= 0.5).astype(int) == y[val_i]).mean()))
        fold_sel.append([table.names[c] for c in sel])

    fseed = derive_seed(seed, "final")
    sel = select_features(X, y, cfg.target_k, fseed, cfg, table.names)
    model = train_forest(X[:, sel], y, cfg, fseed)
    te = table.test_idx
    test_acc = test_auc = None
    preds = []
    if len(te):
        Xt, yt = table.X[np.ix_(te, sel)], table.y[te]
        pt = predict_proba(model, Xt)
        test_acc = float(((pt >= 0.5).astype(int) == yt).mean())
        test_auc = auc(pt, yt) if len(np.unique(yt)) == 2 else None
        preds = [{"subject_id": table.ids[i], "label": int(table.y[i]), "score": float(s),
                  "predicted": int(s >= 0.5)} for i, s in zip(te, pt)]
        imp_X, imp_y = Xt, yt
    else:
        imp_X, imp_y = X[:, sel], y
    imps = permutation_importance(model, imp_X, imp_y, derive_seed(seed, "perm"), cfg.n_permutations)
    return EvalReport(
        cv_accuracy_mean=float(np.mean(accs)),
        cv_accuracy_std=float(np.std(accs)),
        cv_fold_accuracies=accs,
        cv_auc=auc(oof, y),
        test_accuracy=test_acc,
        test_auc=test_auc,
        selected_features=[table.names[c] for c in sel],
        importances={table.names[c]: float(v) for c, v in zip(sel, imps)},
        fold_selected=fold_sel,
        test_predictions=preds,
    )


def write_report(report: EvalReport, out_dir, extra: dict | None = None) -> tuple[Path, Path]:
    import json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    d = report.to_dict()
    d.update(extra or {})
    jpath = out_dir / "report.json"
    jpath.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    cpath = out_dir / "report.csv"
    with open(cpath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for key in ("auc", "cv_auc", "cv_accuracy_mean", "cv_accuracy_std", "test_accuracy", "test_auc"):
            w.writerow([key, "" if d[key] is None else repr(float(d[key]))])
        for name in report.selected_features:
            w.writerow([f"importance:{name}", repr(report.importances[name])])
    return jpath, cpath
