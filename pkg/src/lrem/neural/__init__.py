from .inn import CouplingBlock, DnnModel, InnModel, IoLayout, NumericError
from .io import load_model, save_model
from .mlp import Mlp, ShapeError
from .training import TrainConfig, TrainResult, TrainingError, rmse_forward, rmse_inverse, train

__all__ = [
    "CouplingBlock", "DnnModel", "InnModel", "IoLayout", "Mlp", "NumericError", "ShapeError",
    "TrainConfig", "TrainResult", "TrainingError", "load_model", "rmse_forward", "rmse_inverse",
    "save_model", "train",
]
