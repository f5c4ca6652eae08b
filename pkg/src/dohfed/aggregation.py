"""Per-kind aggregation of peer models.

Linear models are averaged coordinate-wise; trees compete on a validation
set and the most accurate one is kept; forests are pooled and pruned to
their best trees.
"""
from __future__ import annotations

from fractions import Fraction
from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .models import ForestModel, HoeffdingTree, LinearModel, predict_many


def _xy(validation):
    X, y = (validation.X, validation.y) if hasattr(validation, "X") else validation
    y = np.asarray(y)
    if len(y) == 0:
        raise ModelError("empty validation set")
    return np.asarray(X, dtype=np.float64), y


@dataclass
class CandidateSet:
    """Models a node can choose from; the owner's own model comes first.

    ``owner=None`` is a node with no model of its own (the CFL server).
    """

    owner: int | None
    models: list[tuple[int, object]]

    def __post_init__(self):
        if not self.models:
            raise ModelError("candidate set is empty")
        if self.owner is not None and self.models[0][0] != self.owner:
            raise ModelError("the owner's own model must come first")
        kinds = {type(m) for _, m in self.models}
        if len(kinds) != 1:
            raise ModelError(f"mixed model kinds in candidate set: {sorted(k.__name__ for k in kinds)}")


def _exact_mean(values) -> float:
    return float(sum(map(Fraction, map(float, values))) / len(values))


def aggregate_mean(params_list) -> LinearModel:
    """Unweighted coordinate-wise mean.

    Each coordinate is the exact rational mean rounded once to the nearest
    double, so the result does not depend on input order and the mean of
    identical models is that model, bit for bit.
    """
    params_list = list(params_list)
    if not params_list:
        raise ModelError("nothing to aggregate")
    first = params_list[0]
    for p in params_list[1:]:
        if p.loss_kind != first.loss_kind:
            raise ModelError(f"loss kinds differ: {first.loss_kind} vs {p.loss_kind}")
        if p.dimension != first.dimension:
            raise ModelError(f"dimensions differ: {first.dimension} vs {p.dimension}")
    m = len(params_list)
    W = np.stack([p.weights for p in params_list])
    weights = np.array([_exact_mean(W[:, j]) for j in range(W.shape[1])])
    bias = _exact_mean([p.bias for p in params_list])
    return LinearModel(weights, bias, first.loss_kind)


def correct_count(model, validation) -> int:
    X, y = _xy(validation)
    return int(np.sum(predict_many(model, X) == y))


def evaluate_candidate(model, validation) -> float:
    X, y = _xy(validation)
    return float(np.mean(predict_many(model, X) == y))


def select_best_tree(candidates: CandidateSet, validation) -> HoeffdingTree:
    """Most accurate candidate; ties go to the owner, then the lowest sender id."""
    X, y = _xy(validation)
    best_key, best = None, None
    for sender, tree in candidates.models:
        key = (-correct_count(tree, (X, y)), candidates.owner is None or sender != candidates.owner, sender)
        if best_key is None or key < best_key:
            best_key, best = key, tree
    return best


def flatten_and_prune(forests, validation, cap: int) -> ForestModel:
    """Pool every tree (owner's forest first) and keep the ``cap`` most accurate.

    Each tree is scored with its own feature mask. Ties keep pool order, and
    the survivors are emitted in pool order.
    """
    forests = list(forests)
    if cap < 1:
        raise ModelError("cap must be >= 1")
    pool = [(t, m, r) for f in forests for t, m, r in zip(f.trees, f.masks, f.rngs)]
    if not pool:
        raise ModelError("no trees to pool")
    X, y = _xy(validation)
    scores = np.array([int(np.sum(t.predict(X[:, m]) == y)) for t, m, _ in pool])
    keep = np.sort(np.argsort(-scores, kind="stable")[:cap])
    return ForestModel(
        [pool[i][0] for i in keep],
        [pool[i][1] for i in keep],
        [pool[i][2] for i in keep],
        cap,
    )


def tree_scores(forest: ForestModel, validation) -> list[float]:
    X, y = _xy(validation)
    return [float(np.mean(t.predict(X[:, m]) == y)) for t, m in zip(forest.trees, forest.masks)]
