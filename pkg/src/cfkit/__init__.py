"""cfkit: local, group-wise and global counterfactual explanations from one
differentiable objective, with flow-based plausibility."""

from . import autodiff
from .adam import Adam, adam_step
from .data import (
    Dataset,
    Scaler,
    load_csv,
    make_blobs,
    make_moons,
    split_folds,
    standardize,
)
from .engine import (
    CfSolution,
    ConstraintSet,
    CounterfactualExplainer,
    FeatureConstraint,
    extract_groups,
)
from .metrics import (
    MetricReport,
    log_density_metric,
    prob_plausibility_metric,
    proximity_metric,
    solution_report,
    validity_metric,
)
from .models import (
    ConditionalAffineFlow,
    LogisticClassifier,
    MlpClassifier,
    density_threshold,
    load_model,
    save_model,
    train_classifier,
    train_flow,
)

__version__ = "0.1.0"

__all__ = [
    "autodiff",
    "Adam",
    "adam_step",
    "Dataset",
    "Scaler",
    "load_csv",
    "make_moons",
    "make_blobs",
    "split_folds",
    "standardize",
    "CounterfactualExplainer",
    "CfSolution",
    "ConstraintSet",
    "FeatureConstraint",
    "extract_groups",
    "MetricReport",
    "validity_metric",
    "proximity_metric",
    "prob_plausibility_metric",
    "log_density_metric",
    "solution_report",
    "LogisticClassifier",
    "MlpClassifier",
    "ConditionalAffineFlow",
    "train_classifier",
    "train_flow",
    "density_threshold",
    "save_model",
    "load_model",
]
