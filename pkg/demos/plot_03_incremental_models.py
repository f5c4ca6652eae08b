"""
Incremental classifiers on a stream
===================================

SGD linear models, a Hoeffding tree and an online random forest all learn
one batch (or one record) at a time.
"""

import numpy as np

from dohfed.models import (
    HoeffdingTree,
    SgdHyper,
    forest_init,
    hoeffding_bound,
    linear_init,
    linear_partial_fit,
    linear_predict,
)

rng = np.random.default_rng(0)


def stream(n):
    y = rng.integers(0, 2, n)
    X = rng.standard_normal((n, 3))
    X[:, 0] += 4.0 * (y - 0.5)
    X[:, 1] += 2.0 * (y - 0.5)
    return X, y


X, y = stream(4000)
X_test, y_test = stream(2000)

###############################################################################
# Linear models: 20 batches of 50, one SGD pass each.

for loss in ("hinge", "log"):
    model = linear_init(3, loss)
    for r in range(20):
        batch = slice(50 * r, 50 * (r + 1))
        model = linear_partial_fit(model, X[batch], y[batch], SgdHyper(), t0=50 * r)
    print(f"{loss:5s} accuracy {np.mean(linear_predict(model, X_test) == y_test):.3f}  weights {np.round(model.weights, 3)}")

###############################################################################
# The Hoeffding tree waits until the bound says the best split is really best.

print("bound after 200 / 2000 samples:", round(hoeffding_bound(1, 1e-7, 200), 4), round(hoeffding_bound(1, 1e-7, 2000), 4))
tree = HoeffdingTree(3)
for xi, yi in zip(X, y):
    tree.learn_one(xi, yi)
print(f"tree: {len(tree.splits())} splits, depth {tree.depth}, accuracy {np.mean(tree.predict(X_test) == y_test):.3f}")

###############################################################################
# The forest gives each tree a random feature subset and a Poisson(1)
# replication count per record.

forest = forest_init(10, 3, seed=0)
for xi, yi in zip(X, y):
    forest.learn_one(xi, yi)
print("masks:", [m.tolist() for m in forest.masks])
print(f"forest accuracy {np.mean(forest.predict(X_test) == y_test):.3f}")
