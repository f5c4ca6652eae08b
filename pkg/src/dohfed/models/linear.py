"""SGD-trained linear classifiers: hinge loss (SVM) and log loss (LR).

Dataset labels are 0/1; hinge updates use y' = 2y - 1 internally.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import ConfigError, ModelError

LOSS_KINDS = ("hinge", "log")
FORMAT = "dohfed.linear"
VERSION = 1


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    loss_kind: str

    @property
    def dimension(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class SgdHyper:
    """``schedule`` is ``"constant"`` (eta0) or ``"decay"`` (eta0 / (1 + l2 * t))."""

    eta0: float = 0.01
    l2: float = 1e-4
    epochs_per_batch: int = 1
    schedule: str = "constant"

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ConfigError("eta0 must be positive")
        if self.l2 < 0:
            raise ConfigError("l2 must be non-negative")
        if self.epochs_per_batch < 1:
            raise ConfigError("epochs_per_batch must be >= 1")
        if self.schedule not in ("constant", "decay"):
            raise ConfigError(f"unknown learning-rate schedule {self.schedule!r}")

    def rate(self, t: int) -> float:
        if self.schedule == "constant":
            return self.eta0
        return self.eta0 / (1.0 + self.l2 * t)


def linear_init(dimension: int, loss_kind: str) -> LinearModel:
    if dimension < 1:
        raise ConfigError(f"dimension must be >= 1, got {dimension}")
    if loss_kind not in LOSS_KINDS:
        raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got {loss_kind!r}")
    return LinearModel(np.zeros(dimension), 0.0, loss_kind)


def _check_X(params: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != params.dimension:
        raise ModelError(f"expected {params.dimension} features, got {X.shape[1]}")
    if not np.isfinite(X).all():
        raise ModelError("non-finite feature value")
    return X


def linear_partial_fit(params: LinearModel, X, y, hyper: SgdHyper = SgdHyper(), t0: int = 0) -> LinearModel:
    """Plain per-sample SGD over the batch in the given order.

    ``t0`` is the number of steps already taken (drives the decay schedule).
    Returns a new model; ``params`` is left untouched.
    """
    X = _check_X(params, X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(y) != len(X):
        raise ModelError("X and y differ in length")
    w = params.weights.astype(np.float64, copy=True)
    b = float(params.bias)
    lam = hyper.l2
    t = t0
    hinge = params.loss_kind == "hinge"
    if hinge:
        y = np.where(y > 0, 1.0, -1.0)
    for _ in range(hyper.epochs_per_batch):
        for xi, yi in zip(X, y):
            eta = hyper.rate(t)
            z = float(xi @ w) + b
            if hinge:
                if lam:
                    w *= 1.0 - eta * lam
                if yi * z < 1.0:
                    w += eta * yi * xi
                    b += eta * yi
            else:
                g = float(expit(z)) - yi
                w -= eta * (g * xi + lam * w)
                b -= eta * g
            t += 1
    if not (np.isfinite(w).all() and np.isfinite(b)):
        raise ModelError("SGD diverged to non-finite parameters")
    return LinearModel(w, b, params.loss_kind)


def linear_decision(params: LinearModel, X) -> np.ndarray:
    return _check_X(params, X) @ params.weights + params.bias


def linear_predict(params: LinearModel, X) -> np.ndarray:
    """Malicious iff decision > 0; a zero decision is benign."""
    return (linear_decision(params, X) > 0).astype(np.int64)


def lr_probability(params: LinearModel, X) -> np.ndarray:
    return expit(linear_decision(params, X))


def log_loss(params: LinearModel, X, y, l2: float = 0.0) -> float:
    """Mean negative log-likelihood plus ``l2/2 * ||w||^2``."""
    z = linear_decision(params, X)
    y = np.asarray(y, dtype=np.float64)
    nll = np.logaddexp(0.0, z) - y * z
    return float(nll.mean() + 0.5 * l2 * params.weights @ params.weights)


def log_loss_gradient(params: LinearModel, X, y, l2: float = 0.0) -> tuple[np.ndarray, float]:
    X = _check_X(params, X)
    g = expit(X @ params.weights + params.bias) - np.asarray(y, dtype=np.float64)
    return X.T @ g / len(g) + l2 * params.weights, float(g.mean())


# Fixed-width number encoding: sign slot, 17 significant digits, 3-digit
# exponent. Every finite double maps to exactly 24 characters, so a model's
# serialized size depends only on its dimension and loss kind.
def _fixed(v: float) -> str:
    mant, exp = f"{v:.16e}".split("e")
    sign = "-" if mant.startswith("-") else " "
    return f"{sign}{mant.lstrip('-')}e{int(exp):+04d}"


def dumps_linear(params: LinearModel) -> str:
    if not (np.isfinite(params.weights).all() and np.isfinite(params.bias)):
        raise ModelError("cannot serialize non-finite parameters")
    ws = ",".join(_fixed(float(v)) for v in params.weights)
    return (
        f'{{"format":"{FORMAT}","version":{VERSION},"loss_kind":"{params.loss_kind}",'
        f'"weights":[{ws}],"bias":{_fixed(float(params.bias))}}}'
    )


def linear_from_dict(d: dict) -> LinearModel:
    if d.get("format") != FORMAT or d.get("version") != VERSION:
        raise ModelError("not a supported linear model document")
    return LinearModel(np.array(d["weights"], dtype=np.float64), float(d["bias"]), d["loss_kind"])


def loads_linear(text: str) -> LinearModel:
    return linear_from_dict(json.loads(text))
