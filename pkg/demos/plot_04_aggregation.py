"""
Combining peer models
=====================

Linear models are averaged; trees compete on a validation set; forests
pool their trees and keep the best ones.
"""

import numpy as np

from dohfed.aggregation import CandidateSet, aggregate_mean, flatten_and_prune, select_best_tree, tree_scores
from dohfed.models import HoeffdingTree, LinearModel, forest_init

a = LinearModel(np.array([1.0, 3.0]), 2.0, "hinge")
b = LinearModel(np.array([3.0, 5.0]), 4.0, "hinge")
print("mean:", aggregate_mean([a, b]))

###############################################################################
# Two entities each learned one attack. A validation set holding both
# attacks decides which tree (or which trees) survive.

rng = np.random.default_rng(3)


def entity_stream(axis, n=3000):
    y = rng.integers(0, 2, n)
    X = rng.standard_normal((n, 2))
    X[y == 1, axis] += 6.0
    return X, y


trees, forests = [], []
for entity, axis in enumerate((0, 1)):
    X, y = entity_stream(axis)
    tree = HoeffdingTree(2)
    forest = forest_init(5, 2, seed=entity, mask_size=1)
    for xi, yi in zip(X, y):
        tree.learn_one(xi, yi)
        forest.learn_one(xi, yi)
    trees.append((entity, tree))
    forests.append(forest)

(X0, y0), (X1, y1) = entity_stream(0, 500), entity_stream(1, 500)
Xv, yv = np.concatenate([X0, X1]), np.concatenate([y0, y1])
best = select_best_tree(CandidateSet(0, trees), (Xv, yv))
print("selected tree from entity", [e for e, t in trees if t is best][0])

pruned = flatten_and_prune(forests, (Xv, yv), cap=5)
print("pooled tree scores:", [round(s, 3) for f in forests for s in tree_scores(f, (Xv, yv))])
print("kept:", [round(s, 3) for s in tree_scores(pruned, (Xv, yv))])
