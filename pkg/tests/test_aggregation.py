import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dohfed.aggregation import (
    CandidateSet,
    aggregate_mean,
    evaluate_candidate,
    flatten_and_prune,
    select_best_tree,
    tree_scores,
)
from dohfed.errors import ModelError
from dohfed.models import ForestModel, HoeffdingTree, LinearModel, dumps_linear


def lin(w, b, kind="hinge"):
    return LinearModel(np.asarray(w, dtype=float), float(b), kind)


def threshold_tree(threshold, flip=False):
    """A one-split tree on feature 0: malicious above ``threshold`` (below, if flipped)."""
    from dohfed.models.hoeffding import Leaf, Split

    t = HoeffdingTree(1)
    left, right = Leaf(1, 1), Leaf(1, 1)
    left.class_counts[:] = (0, 1) if flip else (1, 0)
    right.class_counts[:] = (1, 0) if flip else (0, 1)
    t.root = Split(0, threshold, left, right, 0)
    return t


def constant_tree(label):
    t = HoeffdingTree(1)
    t.root.class_counts[:] = (0, 1) if label else (1, 0)
    return t


# -- aggregate_mean ---------------------------------------------------------------
def test_mean_of_two():
    m = aggregate_mean([lin([1, 3], 2), lin([3, 5], 4)])
    assert m.weights.tolist() == [2, 4] and m.bias == 3


def test_single_and_repeated_models_are_fixed_points():
    p = lin([0.1, -0.7, 1e-300], 0.3)
    assert dumps_linear(aggregate_mean([p])) == dumps_linear(p)
    assert dumps_linear(aggregate_mean([p] * 7)) == dumps_linear(p)


def test_mean_rejects_mismatch():
    with pytest.raises(ModelError):
        aggregate_mean([lin([1], 0), lin([1, 2], 0)])
    with pytest.raises(ModelError):
        aggregate_mean([lin([1], 0, "hinge"), lin([1], 0, "log")])
    with pytest.raises(ModelError):
        aggregate_mean([])


vectors = st.integers(1, 5).flatmap(
    lambda d: st.lists(st.tuples(st.lists(st.floats(-1e6, 1e6), min_size=d, max_size=d), st.floats(-1e6, 1e6)),
                       min_size=1, max_size=12))


@settings(max_examples=150)
@given(vectors, st.randoms(use_true_random=False))
def test_mean_is_permutation_invariant(params, rnd):
    models = [lin(w, b) for w, b in params]
    shuffled = models[:]
    rnd.shuffle(shuffled)
    a, b = aggregate_mean(models), aggregate_mean(shuffled)
    assert a.weights.tolist() == b.weights.tolist() and a.bias == b.bias


@settings(max_examples=100)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
def test_mean_of_group_means_is_global_mean(d, groups, size, seed):
    rng = np.random.default_rng(seed)
    models = [lin(rng.normal(size=d), rng.normal()) for _ in range(groups * size)]
    parts = [aggregate_mean(models[i * size:(i + 1) * size]) for i in range(groups)]
    two_level, flat = aggregate_mean(parts), aggregate_mean(models)
    assert np.max(np.abs(two_level.weights - flat.weights)) <= 1e-12
    assert abs(two_level.bias - flat.bias) <= 1e-12


def test_mean_against_numpy():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(9, 4))
    m = aggregate_mean([lin(w, 0) for w in W])
    np.testing.assert_allclose(m.weights, W.mean(axis=0), rtol=0, atol=1e-15)


# -- evaluate_candidate / select_best_tree ----------------------------------------------
def test_evaluate_candidate_counts():
    always = constant_tree(1)
    X = np.zeros((4, 1))
    assert evaluate_candidate(always, (X, np.ones(4, dtype=int))) == 1.0
    assert evaluate_candidate(always, (X, np.zeros(4, dtype=int))) == 0.0
    assert evaluate_candidate(always, (X, np.array([1, 1, 1, 0]))) == 0.75
    with pytest.raises(ModelError):
        evaluate_candidate(always, (np.zeros((0, 1)), np.array([], dtype=int)))
    assert evaluate_candidate(lin([1.0], -0.5), (np.array([[0.0], [1.0]]), np.array([0, 1]))) == 1.0




def test_select_peer_with_best_accuracy():
    X = np.arange(10, dtype=float)[:, None]
    y = (X[:, 0] > 4.5).astype(int)
    own, peer1, peer2 = threshold_tree(1.5), threshold_tree(4.5), threshold_tree(8.5)
    accs = [evaluate_candidate(t, (X, y)) for t in (own, peer1, peer2)]
    assert accs == [0.7, 1.0, 0.6]
    best = select_best_tree(CandidateSet(0, [(0, own), (1, peer1), (2, peer2)]), (X, y))
    assert best is peer1


def test_tie_goes_to_owner_then_lowest_sender():
    X = np.arange(10, dtype=float)[:, None]
    y = (X[:, 0] > 4.5).astype(int)
    own, peer = threshold_tree(3.5), threshold_tree(5.5)
    assert evaluate_candidate(own, (X, y)) == evaluate_candidate(peer, (X, y)) == 0.9
    assert select_best_tree(CandidateSet(2, [(2, own), (0, peer)]), (X, y)) is own
    a, b = threshold_tree(3.5), threshold_tree(5.5)
    assert select_best_tree(CandidateSet(None, [(1, a), (3, b)]), (X, y)) is a
    assert select_best_tree(CandidateSet(None, [(3, b), (1, a)]), (X, y)) is a


def test_single_candidate_and_errors():
    t = constant_tree(0)
    X = np.zeros((3, 1))
    assert select_best_tree(CandidateSet(0, [(0, t)]), (X, np.zeros(3, dtype=int))) is t
    with pytest.raises(ModelError):
        select_best_tree(CandidateSet(0, [(0, t)]), (np.zeros((0, 1)), np.array([], dtype=int)))
    with pytest.raises(ModelError):
        CandidateSet(0, [])
    with pytest.raises(ModelError):
        CandidateSet(0, [(1, t), (0, t)])
    with pytest.raises(ModelError):
        CandidateSet(0, [(0, t), (1, lin([1], 0))])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-1, 11), min_size=1, max_size=8), st.integers(0, 2**31))
def test_selected_tree_is_at_least_as_accurate_as_every_candidate(thresholds, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 10, (40, 1))
    y = rng.integers(0, 2, 40)
    trees = [threshold_tree(t, flip=bool(i % 2)) for i, t in enumerate(thresholds)]
    pool = CandidateSet(0, list(enumerate(trees)))
    best = select_best_tree(pool, (X, y))
    top = evaluate_candidate(best, (X, y))
    assert all(top >= evaluate_candidate(t, (X, y)) for t in trees)
    winners = [i for i, t in enumerate(trees) if evaluate_candidate(t, (X, y)) == top]
    assert best is trees[winners[0]]


# -- flatten_and_prune ------------------------------------------------------------
def forest_of(thresholds, seed=0):
    trees = [threshold_tree(t) for t in thresholds]
    n = len(trees)
    return ForestModel(trees, [np.array([0])] * n, [np.random.default_rng(seed + i) for i in range(n)], n)


def test_two_forests_pruned_to_cap(rng):
    X = rng.uniform(0, 10, (60, 1))
    y = (X[:, 0] > 5).astype(int)
    a = forest_of(rng.uniform(0, 10, 10))
    b = forest_of(rng.uniform(0, 10, 10), seed=100)
    pooled = a.trees + b.trees
    out = flatten_and_prune([a, b], (X, y), 10)
    assert len(out.trees) == 10 and out.t_max == 10
    kept = [evaluate_candidate(t, (X, y)) for t in out.trees]
    dropped = [evaluate_candidate(t, (X, y)) for t in pooled if all(t is not k for k in out.trees)]
    assert min(kept) >= max(dropped)


def test_single_forest_under_cap_is_unchanged(rng):
    f = forest_of([1.0, 7.0, 3.0])
    X = rng.uniform(0, 10, (20, 1))
    y = (X[:, 0] > 5).astype(int)
    out = flatten_and_prune([f], (X, y), 5)
    assert all(a is b for a, b in zip(out.trees, f.trees)) and len(out.trees) == 3


def test_perfect_tree_wins_cap_one():
    X = np.arange(10, dtype=float)[:, None]
    y = (X[:, 0] > 4.5).astype(int)
    a, b = forest_of([1.5, 8.5]), forest_of([4.5, 2.5])
    out = flatten_and_prune([a, b], (X, y), 1)
    assert out.trees == [b.trees[0]]


def test_masks_travel_with_trees():
    X = np.c_[np.zeros(10), np.arange(10.0)]
    y = (X[:, 1] > 4.5).astype(int)
    good = threshold_tree(4.5)
    bad = threshold_tree(4.5)
    f = ForestModel([bad, good], [np.array([0]), np.array([1])], [np.random.default_rng(0)] * 2, 2)
    out = flatten_and_prune([f], (X, y), 1)
    assert out.trees[0] is good and out.masks[0].tolist() == [1]
    assert tree_scores(f, (X, y)) == [0.5, 1.0]


def test_prune_errors():
    f = forest_of([1.0])
    with pytest.raises(ModelError):
        flatten_and_prune([f], (np.zeros((1, 1)), np.array([0])), 0)
    with pytest.raises(ModelError):
        flatten_and_prune([], (np.zeros((1, 1)), np.array([0])), 1)
    with pytest.raises(ModelError):
        flatten_and_prune([f], (np.zeros((0, 1)), np.array([], dtype=int)), 1)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.lists(st.floats(-1, 11), min_size=1, max_size=6), min_size=1, max_size=4),
       st.integers(1, 8), st.integers(0, 2**31))
def test_prune_is_top_k_and_keeps_best_accuracy(forests, cap, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 10, (30, 1))
    y = rng.integers(0, 2, 30)
    fs = [forest_of(t, seed=10 * i) for i, t in enumerate(forests)]
    pool = [t for f in fs for t in f.trees]
    scores = [evaluate_candidate(t, (X, y)) for t in pool]
    out = flatten_and_prune(fs, (X, y), cap)
    assert len(out.trees) == min(cap, len(pool))
    kept = [i for i, t in enumerate(pool) if any(t is k for k in out.trees)]
    # survivors in pool order, each at least as good as every discarded tree
    assert [pool[i] for i in kept] == out.trees
    dropped = [scores[i] for i in range(len(pool)) if i not in kept]
    if dropped:
        assert min(scores[i] for i in kept) >= max(dropped)
    assert max(scores[i] for i in kept) == max(scores)
    # stable ties: among equal scores, earlier pool entries survive first
    for i in kept:
        for j in range(i):
            if j not in kept:
                assert scores[j] < scores[i]
    again = flatten_and_prune(fs, (X, y), cap)
    assert all(a is b for a, b in zip(again.trees, out.trees))


@settings(max_examples=200)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=5), st.floats(-1e6, 1e6), st.integers(1, 12))
def test_mean_of_copies_is_bit_exact(w, b, m):
    p = lin(w, b)
    q = aggregate_mean([p] * m)
    assert q.weights.tolist() == p.weights.tolist() and q.bias == p.bias
