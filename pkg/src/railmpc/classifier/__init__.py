from .dataset import Dataset, concat
from .model import (ClassifierModel, HyperParams, TrainMetrics, default_grid, load, masked_decode,
                    predict, save, train, train_grid)

__all__ = ["Dataset", "concat", "ClassifierModel", "HyperParams", "TrainMetrics", "default_grid",
           "load", "masked_decode", "predict", "save", "train", "train_grid"]
