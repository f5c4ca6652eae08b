"""Online random forest: Hoeffding trees on random feature subspaces,
trained with Poisson(1) online bagging and combined by majority vote."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ModelError
from .hoeffding import HoeffdingTree, TreeConfig

FORMAT = "dohfed.forest"
VERSION = 1


@dataclass
class ForestModel:
    trees: list[HoeffdingTree]
    masks: list[np.ndarray]
    rngs: list[np.random.Generator]
    t_max: int

    def __post_init__(self):
        if not self.trees:
            raise ModelError("a forest needs at least one tree")
        if not (len(self.trees) == len(self.masks) == len(self.rngs)):
            raise ModelError("trees, masks and rng streams must align")
        if len(self.trees) > self.t_max:
            raise ModelError(f"{len(self.trees)} trees exceed the cap of {self.t_max}")
        for m in self.masks:
            if len(m) == 0:
                raise ModelError("empty feature mask")

    @property
    def n_features(self) -> int:
        return int(max(int(m.max()) for m in self.masks)) + 1

    def votes(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.stack([t.predict(X[:, m]) for t, m in zip(self.trees, self.masks)])

    def predict(self, X) -> np.ndarray:
        """Majority vote; an even split goes to benign."""
        v = self.votes(X)
        return (2 * v.sum(axis=0) > len(self.trees)).astype(np.int64)

    def learn_one(self, x, y: int) -> "ForestModel":
        x = np.asarray(x, dtype=np.float64)
        for tree, mask, rng in zip(self.trees, self.masks, self.rngs):
            sub = x[mask]
            for _ in range(int(rng.poisson(1.0))):
                tree.learn_one(sub, y)
        return self

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "t_max": self.t_max,
            "trees": [t.to_dict() for t in self.trees],
            "masks": [m.tolist() for m in self.masks],
            "rng_states": [r.bit_generator.state for r in self.rngs],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ModelError("not a supported forest document")
        rngs = []
        for state in d["rng_states"]:
            g = np.random.Generator(getattr(np.random, state["bit_generator"])())
            g.bit_generator.state = state
            rngs.append(g)
        return cls(
            [HoeffdingTree.from_dict(t) for t in d["trees"]],
            [np.array(m, dtype=np.int64) for m in d["masks"]],
            rngs,
            int(d["t_max"]),
        )

    @classmethod
    def loads(cls, text: str) -> "ForestModel":
        return cls.from_dict(json.loads(text))


def forest_init(
    n_trees: int,
    dimension: int,
    config: TreeConfig | None = None,
    seed=0,
    mask_size: int | None = None,
    t_max: int | None = None,
) -> ForestModel:
    """``n_trees`` empty trees, each on ``ceil(sqrt(dimension))`` random features.

    Every tree gets its own generator spawned from ``seed``; it draws the mask
    and later the Poisson replication counts.
    """
    if n_trees < 1:
        raise ConfigError(f"n_trees must be >= 1, got {n_trees}")
    if dimension < 1:
        raise ConfigError("dimension must be >= 1")
    size = mask_size or math.ceil(math.sqrt(dimension))
    if not 1 <= size <= dimension:
        raise ConfigError(f"mask size must lie in [1, {dimension}]")
    trees, masks, rngs = [], [], []
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for child in root.spawn(n_trees):
        rng = np.random.default_rng(child)
        masks.append(np.sort(rng.choice(dimension, size=size, replace=False)).astype(np.int64))
        trees.append(HoeffdingTree(size, config))
        rngs.append(rng)
    return ForestModel(trees, masks, rngs, t_max or n_trees)


def forest_learn_one(forest: ForestModel, x, y: int) -> ForestModel:
    return forest.learn_one(x, y)


def forest_predict(forest: ForestModel, x) -> int:
    return int(forest.predict(np.atleast_2d(x))[0])
