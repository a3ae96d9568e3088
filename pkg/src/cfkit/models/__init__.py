from .classifiers import LogisticClassifier, MlpClassifier, train_classifier
from .flow import ConditionalAffineFlow, density_threshold, train_flow
from .persistence import load_model, save_model

__all__ = [
    "LogisticClassifier",
    "MlpClassifier",
    "ConditionalAffineFlow",
    "train_classifier",
    "train_flow",
    "density_threshold",
    "save_model",
    "load_model",
]
