"""A small numpy engine for Conv1D/BN/ReLU/pool/dropout/GAP/dense classifiers."""

from robusttc.tensornn.checkpoint import dumps_model, load_model, loads_model, save_model
from robusttc.tensornn.model import (Model, backward, build, forward, input_gradient, loss,
                                     loss_and_grads, predict, predict_proba, shapes_observed,
                                     update_bn_stats)
from robusttc.tensornn.optim import Adam, adam_step
from robusttc.tensornn.spec import ArchSpec, BlockSpec, PoolSpec
from robusttc.tensornn.train import History, TrainConfig, accuracy, evaluate, fit, train

__all__ = [
    "Adam", "ArchSpec", "BlockSpec", "History", "Model", "PoolSpec", "TrainConfig",
    "accuracy", "adam_step", "backward", "build", "dumps_model", "evaluate", "fit", "forward",
    "input_gradient", "load_model", "loads_model", "loss", "loss_and_grads", "predict",
    "predict_proba", "save_model", "shapes_observed", "train", "update_bn_stats",
]
