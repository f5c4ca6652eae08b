"""Kind-agnostic helpers: serialize, parse and batch-predict any model."""
from __future__ import annotations

import json

import numpy as np

from ..errors import ModelError
from .forest import ForestModel
from .hoeffding import HoeffdingTree
from .linear import LinearModel, dumps_linear, linear_from_dict, linear_predict


def dumps_model(model) -> str:
    if isinstance(model, LinearModel):
        return dumps_linear(model)
    if isinstance(model, (HoeffdingTree, ForestModel)):
        return model.dumps()
    raise ModelError(f"cannot serialize {type(model).__name__}")


def loads_model(text: str):
    d = json.loads(text)
    fmt = d.get("format")
    if fmt == "dohfed.linear":
        return linear_from_dict(d)
    if fmt == "dohfed.tree":
        return HoeffdingTree.from_dict(d)
    if fmt == "dohfed.forest":
        return ForestModel.from_dict(d)
    raise ModelError(f"unknown model format {fmt!r}")


def predict_many(model, X) -> np.ndarray:
    if isinstance(model, LinearModel):
        return linear_predict(model, X)
    if isinstance(model, (HoeffdingTree, ForestModel)):
        return model.predict(X)
    raise ModelError(f"cannot predict with {type(model).__name__}")
