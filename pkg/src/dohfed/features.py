"""Feature standardization and principal-component projection.

Both transforms are fit once on the pooled entity training sets and shared
by every node, so linear parameters live in a common basis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

FORMAT_VERSION = 1


def _as_matrix(records) -> np.ndarray:
    X = records.X if hasattr(records, "X") else records
    return np.asarray(X, dtype=np.float64)


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stddevs: np.ndarray
    constant: np.ndarray  # bool mask of zero-variance columns (stddev forced to 1)

    @property
    def dimension(self) -> int:
        return len(self.means)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dimension:
            raise DataError(f"expected {self.dimension} features, got {X.shape[-1]}")
        return (X - self.means) / self.stddevs


def fit_standardizer(records) -> Standardizer:
    X = _as_matrix(records)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("need at least 2 records to fit a standardizer")
    means = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    # spread at the level of round-off in the mean counts as constant
    scale = np.abs(X).max(axis=0)
    constant = (np.ptp(X, axis=0) == 0) | (std <= 64 * np.finfo(np.float64).eps * scale)
    return Standardizer(means, np.where(constant, 1.0, std), constant)


@dataclass(frozen=True)
class PcaModel:
    components: np.ndarray  # k x n, orthonormal rows
    explained_variance: np.ndarray  # length k, non-increasing
    total_variance: float

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def dimension(self) -> int:
        return self.components.shape[1]

    def truncate(self, k: int) -> "PcaModel":
        if not 1 <= k <= self.k:
            raise ConfigError(f"k must lie in [1, {self.k}], got {k}")
        return PcaModel(self.components[:k].copy(), self.explained_variance[:k].copy(), self.total_variance)

    def cumulative_ratio(self) -> np.ndarray:
        if self.total_variance == 0:
            return np.ones(self.k)
        return np.cumsum(self.explained_variance) / self.total_variance


def fit_pca(Z, k: int) -> PcaModel:
    """Top-``k`` eigenvectors of the sample covariance of ``Z``.

    Each loading vector is signed so its largest-magnitude entry is positive
    (the first such entry on exact ties).
    """
    Z = _as_matrix(Z)
    n = Z.shape[1]
    if not 1 <= k <= n:
        raise ConfigError(f"k must lie in [1, {n}], got {k}")
    if Z.shape[0] < max(k, 2):
        raise DataError(f"need at least max(k, 2) = {max(k, 2)} records, got {Z.shape[0]}")
    cov = np.cov(Z, rowvar=False, ddof=1).reshape(n, n)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals, kind="stable")[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order].T
    for row in vecs:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1
    return PcaModel(vecs[:k].copy(), vals[:k].copy(), float(np.trace(cov)))


def transform(pca: PcaModel, standardizer: Standardizer | None, X) -> np.ndarray:
    """Project raw records (or a single record) onto the principal components."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != pca.dimension:
        raise DataError(f"expected {pca.dimension} features, got {X.shape[-1]}")
    Z = standardizer.apply(X) if standardizer is not None else X
    return Z @ pca.components.T


def inverse_transform(pca: PcaModel, standardizer: Standardizer | None, P) -> np.ndarray:
    Z = np.asarray(P, dtype=np.float64) @ pca.components
    if standardizer is None:
        return Z
    return Z * standardizer.stddevs + standardizer.means


@dataclass(frozen=True)
class Preprocessor:
    """Standardizer + PCA truncated to the run's component count."""

    standardizer: Standardizer
    pca: PcaModel

    def __call__(self, X) -> np.ndarray:
        return transform(self.pca, self.standardizer, X)

    def with_k(self, k: int) -> "Preprocessor":
        return Preprocessor(self.standardizer, self.pca.truncate(k))

    def to_dict(self) -> dict:
        return {
            "format": "dohfed.preprocessing",
            "version": FORMAT_VERSION,
            "dims": self.pca.dimension,
            "k": self.pca.k,
            "means": self.standardizer.means.tolist(),
            "stddevs": self.standardizer.stddevs.tolist(),
            "constant": self.standardizer.constant.tolist(),
            "components": self.pca.components.ravel().tolist(),
            "explained_variance": self.pca.explained_variance.tolist(),
            "total_variance": self.pca.total_variance,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Preprocessor":
        if d.get("format") != "dohfed.preprocessing" or d.get("version") != FORMAT_VERSION:
            raise ConfigError("not a dohfed preprocessing document of a supported version")
        n, k = int(d["dims"]), int(d["k"])
        std = Standardizer(
            np.array(d["means"], dtype=np.float64),
            np.array(d["stddevs"], dtype=np.float64),
            np.array(d.get("constant", [False] * n), dtype=bool),
        )
        pca = PcaModel(
            np.array(d["components"], dtype=np.float64).reshape(k, n),
            np.array(d["explained_variance"], dtype=np.float64),
            float(d["total_variance"]),
        )
        return cls(std, pca)

    @classmethod
    def loads(cls, text: str) -> "Preprocessor":
        return cls.from_dict(json.loads(text))


def fit_preprocessor(train_X, k: int | None = None) -> Preprocessor:
    std = fit_standardizer(train_X)
    Z = std.apply(_as_matrix(train_X))
    return Preprocessor(std, fit_pca(Z, k or Z.shape[1]))


@dataclass
class SweepResult:
    rows: list[dict]  # k, model, entity, accuracy
    stats: list[dict]  # per k: mean, spread, normalized forms, score
    selected_k: int


def sweep_components(k_values, config, split, preprocessor: Preprocessor | None = None,
                     model_kinds=("svm", "lr", "dt", "rf"), scope: str = "global",
                     threads: int = 1) -> SweepResult:
    """One full scenario run per (k, model kind), everything else fixed.

    Per k, ``mean`` is the final-round accuracy averaged over entities and
    model kinds, and ``spread`` is the across-entity standard deviation
    averaged over model kinds. Both are min-max normalized over the swept
    k values; the selected k maximizes ``norm_mean - norm_spread``, ties
    going to higher mean, then lower spread, then smaller k.
    """
    from dataclasses import replace

    from .federation import run_scenario

    k_values = list(k_values)
    if not k_values:
        raise ConfigError("empty component range")
    if preprocessor is None:
        train = np.concatenate([s.train.X for s in split.shards])
        preprocessor = fit_preprocessor(train)
    if max(k_values) > preprocessor.pca.k or min(k_values) < 1:
        raise ConfigError(f"component counts must lie in [1, {preprocessor.pca.k}]")

    rows = []
    for k in k_values:
        for kind in model_kinds:
            cfg = replace(config, pca_k=int(k), model_kind=kind)
            result = run_scenario(cfg, split, preprocessor, threads=threads)
            for e, m in sorted(result.final(scope).items()):
                rows.append({"k": int(k), "model": kind, "entity": e, "accuracy": m["accuracy"]})

    stats = []
    for k in k_values:
        mine = [r for r in rows if r["k"] == k]
        spreads = [float(np.std([r["accuracy"] for r in mine if r["model"] == kind])) for kind in model_kinds]
        stats.append({"k": int(k), "mean": float(np.mean([r["accuracy"] for r in mine])),
                      "spread": float(np.mean(spreads))})
    for key in ("mean", "spread"):
        vals = np.array([s[key] for s in stats])
        lo, hi = vals.min(), vals.max()
        for s, v in zip(stats, vals):
            s[f"norm_{key}"] = float((v - lo) / (hi - lo)) if hi > lo else 0.0
    for s in stats:
        s["score"] = s["norm_mean"] - s["norm_spread"]
    best = min(stats, key=lambda s: (-s["score"], -s["mean"], s["spread"], s["k"]))
    return SweepResult(rows, stats, best["k"])
