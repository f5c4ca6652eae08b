"""Incremental Hoeffding tree for binary classification over numeric features.

Each leaf keeps observed class counts plus, per class, Gaussian sufficient
statistics (weight, mean, M2) of every feature and the per-feature observed
range. Every ``grace_period`` samples a leaf scores ``n_candidates``
thresholds per feature, spaced evenly across the observed range, using the
Gaussian CDFs to estimate how each class would divide. The leaf splits when
the best gain beats the runner-up (or the null split) by more than the
Hoeffding bound, or when the bound falls below ``tie_threshold``.

A new child leaf inherits the parent's statistics restricted to its side of
the threshold: class weights from the CDF, truncated-normal moments on the
split feature, and the parent's moments elsewhere. Its observed counts
start at zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import truncnorm

from ..errors import ConfigError, ModelError

FORMAT = "dohfed.tree"
VERSION = 1
N_CLASSES = 2


def hoeffding_bound(R: float, delta: float, N: int) -> float:
    """sqrt(R^2 ln(1/delta) / 2N), natural log."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if R < 0:
        raise ValueError(f"R must be >= 0, got {R}")
    return math.sqrt(R * R * math.log(1.0 / delta) / (2.0 * N))


@dataclass(frozen=True)
class TreeConfig:
    delta: float = 1e-7
    grace_period: int = 200
    tie_threshold: float = 0.05
    split_criterion: str = "info_gain"
    n_candidates: int = 10
    max_depth: int | None = None

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ConfigError("delta must lie in (0, 1]")
        if self.grace_period < 1:
            raise ConfigError("grace_period must be >= 1")
        if self.split_criterion not in ("info_gain", "gini"):
            raise ConfigError(f"unknown split criterion {self.split_criterion!r}")
        if self.n_candidates < 1:
            raise ConfigError("n_candidates must be >= 1")

    @property
    def value_range(self) -> float:
        # Range of the split criterion for two classes.
        return 1.0 if self.split_criterion == "info_gain" else 0.5


def _entropy(counts: np.ndarray) -> np.ndarray:
    total = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / total, 0.0)
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def _gini(counts: np.ndarray) -> np.ndarray:
    total = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / total, 0.0)
    return 1.0 - (p * p).sum(axis=-1)


class Leaf:
    __slots__ = ("class_counts", "prior", "weight", "mean", "m2", "lo", "hi", "checked_at", "depth")

    def __init__(self, n_features: int, depth: int = 0):
        self.class_counts = np.zeros(N_CLASSES, dtype=np.int64)
        self.prior = np.zeros(N_CLASSES)
        self.weight = np.zeros(N_CLASSES)
        self.mean = np.zeros((N_CLASSES, n_features))
        self.m2 = np.zeros((N_CLASSES, n_features))
        self.lo = np.full(n_features, np.inf)
        self.hi = np.full(n_features, -np.inf)
        self.checked_at = 0
        self.depth = depth

    @property
    def n_seen(self) -> int:
        return int(self.class_counts.sum())

    def update(self, x: np.ndarray, y: int) -> None:
        self.class_counts[y] += 1
        self.weight[y] += 1.0
        delta = x - self.mean[y]
        self.mean[y] += delta / self.weight[y]
        self.m2[y] += delta * (x - self.mean[y])
        np.minimum(self.lo, x, out=self.lo)
        np.maximum(self.hi, x, out=self.hi)

    def majority(self) -> int:
        counts = self.class_counts if self.class_counts.sum() > 0 else self.prior
        return 1 if counts[1] > counts[0] else 0

    def stddev(self) -> np.ndarray:
        w = self.weight[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            var = np.where(w > 1, self.m2 / (w - 1), 0.0)
        return np.sqrt(np.clip(var, 0.0, None))


class Split:
    # absorbed: samples the leaf had counted before it became this split
    __slots__ = ("feature", "threshold", "left", "right", "depth", "absorbed")

    def __init__(self, feature: int, threshold: float, left, right, depth: int, absorbed: int = 0):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.depth = depth
        self.absorbed = absorbed


def _left_mass(weight, mean, sd, thresholds):
    """Estimated per-class weight at or below each threshold.

    weight: (C,), mean/sd: (C, d), thresholds: (d, m) -> (d, m, C)
    """
    t = thresholds[:, :, None]
    mu = mean.T[:, None, :]
    s = sd.T[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(s > 0, ndtr((t - mu) / np.where(s > 0, s, 1.0)), (mu <= t).astype(float))
    return frac * weight[None, None, :]


class HoeffdingTree:
    def __init__(self, n_features: int, config: TreeConfig | None = None):
        if n_features < 1:
            raise ConfigError("n_features must be >= 1")
        self.n_features = n_features
        self.config = config or TreeConfig()
        self.root = Leaf(n_features)
        self.n_seen = 0

    # -- routing -----------------------------------------------------------
    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_features:
            raise ModelError(f"expected {self.n_features} features, got {x.shape[-1]}")
        if not np.isfinite(x).all():
            raise ModelError("non-finite feature value")
        return x

    def route(self, x) -> Leaf:
        node = self.root
        while isinstance(node, Split):
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def leaves(self) -> list[Leaf]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Split):
                stack.extend((node.right, node.left))
            else:
                out.append(node)
        return out

    def splits(self) -> list[Split]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Split):
                out.append(node)
                stack.extend((node.right, node.left))
        return out

    @property
    def depth(self) -> int:
        return max(leaf.depth for leaf in self.leaves())

    # -- learning ----------------------------------------------------------
    def learn_one(self, x, y: int) -> "HoeffdingTree":
        x = self._check(x)
        y = int(y)
        if y not in (0, 1):
            raise ModelError(f"label must be 0 or 1, got {y}")
        leaf, parent, went_left = self.root, None, False
        while isinstance(leaf, Split):
            parent = leaf
            went_left = x[leaf.feature] <= leaf.threshold
            leaf = leaf.left if went_left else leaf.right
        leaf.update(x, y)
        self.n_seen += 1
        cfg = self.config
        if leaf.n_seen - leaf.checked_at >= cfg.grace_period:
            leaf.checked_at = leaf.n_seen
            if cfg.max_depth is None or leaf.depth < cfg.max_depth:
                split = self._attempt_split(leaf)
                if split is not None:
                    if parent is None:
                        self.root = split
                    elif went_left:
                        parent.left = split
                    else:
                        parent.right = split
        return self

    def _attempt_split(self, leaf: Leaf) -> Split | None:
        cfg = self.config
        W = leaf.weight
        total = W.sum()
        if (W > 0).sum() < 2:
            return None
        usable = np.flatnonzero(leaf.hi > leaf.lo)
        if usable.size == 0:
            return None
        lo, hi = leaf.lo[usable], leaf.hi[usable]
        steps = np.arange(1, cfg.n_candidates + 1) / (cfg.n_candidates + 1)
        thresholds = lo[:, None] + (hi - lo)[:, None] * steps[None, :]
        sd = leaf.stddev()[:, usable]
        L = _left_mass(W, leaf.mean[:, usable], sd, thresholds)
        R = W[None, None, :] - L
        impurity = _entropy if cfg.split_criterion == "info_gain" else _gini
        nl = L.sum(axis=-1)
        gain = impurity(W) - (nl * impurity(L) + (total - nl) * impurity(R)) / total
        best_per_feature = gain.max(axis=1)
        best_arg = gain.argmax(axis=1)
        order = np.argsort(-best_per_feature, kind="stable")
        g1 = float(best_per_feature[order[0]])
        g2 = max(float(best_per_feature[order[1]]) if len(order) > 1 else 0.0, 0.0)
        if g1 <= 1e-12:
            return None
        eps = hoeffding_bound(cfg.value_range, cfg.delta, max(int(round(total)), 1))
        if not (g1 - g2 > eps or eps < cfg.tie_threshold):
            return None
        j = int(order[0])
        f = int(usable[j])
        tau = float(thresholds[j, best_arg[j]])
        return Split(f, tau, *self._children(leaf, f, tau), leaf.depth, leaf.n_seen)

    def _children(self, leaf: Leaf, f: int, tau: float) -> tuple[Leaf, Leaf]:
        left, right = Leaf(self.n_features, leaf.depth + 1), Leaf(self.n_features, leaf.depth + 1)
        sd = leaf.stddev()
        for child in (left, right):
            child.lo[:] = leaf.lo
            child.hi[:] = leaf.hi
        left.hi[f] = min(leaf.hi[f], tau)
        right.lo[f] = max(leaf.lo[f], tau)
        for c in range(N_CLASSES):
            w = leaf.weight[c]
            if w <= 0:
                continue
            mu, s = leaf.mean[c, f], sd[c, f]
            if s > 0:
                a = (tau - mu) / s
                p_left = float(ndtr(a))
            else:
                a = None
                p_left = 1.0 if mu <= tau else 0.0
            for child, p, side in ((left, p_left, "left"), (right, 1.0 - p_left, "right")):
                cw = w * p
                if cw <= 0:
                    continue
                child.prior[c] = cw
                child.weight[c] = cw
                child.mean[c] = leaf.mean[c]
                var = np.square(sd[c])
                if a is not None and p > 1e-12:
                    lo_b, hi_b = (-np.inf, a) if side == "left" else (a, np.inf)
                    m, v = truncnorm.stats(lo_b, hi_b, moments="mv")
                    child.mean[c, f] = mu + s * float(m)
                    var = var.copy()
                    var[f] = max(float(v), 0.0) * s * s
                child.m2[c] = var * max(cw - 1.0, 0.0)
        return left, right

    # -- prediction --------------------------------------------------------
    def predict_one(self, x) -> int:
        return self.route(self._check(x)).majority()

    def predict(self, X) -> np.ndarray:
        X = self._check(np.atleast_2d(X))
        out = np.empty(len(X), dtype=np.int64)
        stack = [(self.root, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            if isinstance(node, Split):
                go_left = X[idx, node.feature] <= node.threshold
                stack.append((node.left, idx[go_left]))
                stack.append((node.right, idx[~go_left]))
            else:
                out[idx] = node.majority()
        return out

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "n_features": self.n_features,
            "n_seen": self.n_seen,
            "config": asdict(self.config),
            "root": _node_to_dict(self.root),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "HoeffdingTree":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ModelError("not a supported tree document")
        tree = cls(int(d["n_features"]), TreeConfig(**d["config"]))
        tree.n_seen = int(d["n_seen"])
        tree.root = _node_from_dict(d["root"], tree.n_features, 0)
        return tree

    @classmethod
    def loads(cls, text: str) -> "HoeffdingTree":
        return cls.from_dict(json.loads(text))


def _bounds_out(a: np.ndarray) -> list:
    return [float(v) if math.isfinite(v) else None for v in a]


def _bounds_in(a: list, fill: float) -> np.ndarray:
    return np.array([fill if v is None else v for v in a], dtype=np.float64)


def _node_to_dict(node) -> dict:
    if isinstance(node, Split):
        return {
            "split": {"f": node.feature, "tau": node.threshold, "absorbed": node.absorbed},
            "children": [_node_to_dict(node.left), _node_to_dict(node.right)],
        }
    return {
        "leaf": {
            "class_counts": node.class_counts.tolist(),
            "prior": node.prior.tolist(),
            "gaussians": {"weight": node.weight.tolist(), "mean": node.mean.tolist(), "m2": node.m2.tolist()},
            "lo": _bounds_out(node.lo),
            "hi": _bounds_out(node.hi),
            "checked_at": node.checked_at,
        }
    }


def _node_from_dict(d: dict, n_features: int, depth: int):
    if "split" in d:
        left, right = (_node_from_dict(c, n_features, depth + 1) for c in d["children"])
        sp = d["split"]
        return Split(int(sp["f"]), float(sp["tau"]), left, right, depth, int(sp.get("absorbed", 0)))
    body = d["leaf"]
    leaf = Leaf(n_features, depth)
    leaf.class_counts = np.array(body["class_counts"], dtype=np.int64)
    leaf.prior = np.array(body["prior"], dtype=np.float64)
    g = body["gaussians"]
    leaf.weight = np.array(g["weight"], dtype=np.float64)
    leaf.mean = np.array(g["mean"], dtype=np.float64).reshape(N_CLASSES, n_features)
    leaf.m2 = np.array(g["m2"], dtype=np.float64).reshape(N_CLASSES, n_features)
    leaf.lo = _bounds_in(body["lo"], np.inf)
    leaf.hi = _bounds_in(body["hi"], -np.inf)
    leaf.checked_at = int(body["checked_at"])
    return leaf


def hoeffding_learn_one(tree: HoeffdingTree, x, y: int) -> HoeffdingTree:
    return tree.learn_one(x, y)


def tree_predict(tree: HoeffdingTree, x) -> int:
    return tree.predict_one(x)


def tree_accuracy(tree: HoeffdingTree, validation) -> float:
    X, y = (validation.X, validation.y) if hasattr(validation, "X") else validation
    y = np.asarray(y)
    if len(y) == 0:
        raise ModelError("empty validation set")
    return float(np.mean(tree.predict(X) == y))
