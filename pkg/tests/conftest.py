import numpy as np
import pytest

from dohfed.data import (
    ClusterSpec,
    SyntheticSpec,
    disjoint_attack_spec,
    generate_synthetic,
    split_validation,
)


def make_split(seed=0, n_entities=4, dimension=4, per_class=700, separation=6.0):
    spec = disjoint_attack_spec(n_entities, dimension, per_class, per_class, separation)
    return split_validation(generate_synthetic(spec, seed), 0.10, 0.10, seed)


def two_blob_spec(n_entities=2, dimension=3, count=150, gap=6.0, scale=1.0):
    """Every entity sees the same benign and attack clusters."""
    attack = tuple([gap] + [0.0] * (dimension - 1))
    ents = {
        e: (ClusterSpec(tuple([0.0] * dimension), scale, count, 0), ClusterSpec(attack, scale, count, 1))
        for e in range(n_entities)
    }
    return SyntheticSpec(dimension, ents)


@pytest.fixture(scope="session")
def axis_split():
    return make_split(seed=0)


@pytest.fixture(scope="session")
def shared_split():
    """Five entities with identical cluster geometry; good for linear models."""
    ents = generate_synthetic(two_blob_spec(n_entities=5, dimension=4, count=300), 3)
    return split_validation(ents, 0.10, 0.10, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance results, echoed in the terminal summary so they survive output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
