from .forest import ForestModel, forest_init, forest_learn_one, forest_predict
from .hoeffding import (
    HoeffdingTree,
    Leaf,
    Split,
    TreeConfig,
    hoeffding_bound,
    hoeffding_learn_one,
    tree_accuracy,
    tree_predict,
)
from .linear import (
    LinearModel,
    SgdHyper,
    dumps_linear,
    linear_decision,
    linear_init,
    linear_partial_fit,
    linear_predict,
    loads_linear,
    log_loss,
    log_loss_gradient,
    lr_probability,
)
from .serialize import dumps_model, loads_model, predict_many

__all__ = [
    "ForestModel", "forest_init", "forest_learn_one", "forest_predict",
    "HoeffdingTree", "Leaf", "Split", "TreeConfig", "hoeffding_bound",
    "hoeffding_learn_one", "tree_accuracy", "tree_predict",
    "LinearModel", "SgdHyper", "dumps_linear", "linear_decision", "linear_init",
    "linear_partial_fit", "linear_predict", "loads_linear", "log_loss",
    "log_loss_gradient", "lr_probability",
    "dumps_model", "loads_model", "predict_many",
]
