from .constraints import ConstraintSet, FeatureConstraint
from .explainer import CfSolution, CounterfactualExplainer
from .groups import extract_groups
from .objective import (
    ObjectiveWeights,
    assignment_entropy,
    compose_counterfactuals,
    distance_term,
    diversity_term,
    group_count_entropy,
    plausibility_term,
    total_objective,
    validity_term,
)

__all__ = [
    "CounterfactualExplainer",
    "CfSolution",
    "ConstraintSet",
    "FeatureConstraint",
    "ObjectiveWeights",
    "extract_groups",
    "distance_term",
    "validity_term",
    "plausibility_term",
    "assignment_entropy",
    "group_count_entropy",
    "diversity_term",
    "compose_counterfactuals",
    "total_objective",
]
