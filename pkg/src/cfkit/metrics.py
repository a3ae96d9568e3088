"""Evaluation metrics for counterfactual solutions.

All metrics are pure functions of their inputs, computed in standardized
feature space. Standard deviations use the unbiased (N-1) denominator and
are omitted for single rows. Coverage counts instances whose returned
counterfactual is both valid and plausibility-feasible; the headline
validity is reported over covered instances (validity over all returned
rows is reported alongside).
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import as_float_matrix


@dataclass
class MetricReport:
    n_instances: int
    coverage: float
    validity: float
    validity_all: float
    proximity_mean: float
    proximity_std: float
    prob_plausibility: float
    log_density_mean: float
    log_density_std: float
    active_group_count: int
    hard_soft_gap: float = None
    wall_clock_seconds: float = None
    per_group: list = field(default_factory=list)

    def to_dict(self):
        return {
            "n_instances": self.n_instances,
            "coverage": self.coverage,
            "validity": self.validity,
            "validity_all": self.validity_all,
            "proximity_mean": self.proximity_mean,
            "proximity_std": self.proximity_std,
            "prob_plausibility": self.prob_plausibility,
            "log_density_mean": self.log_density_mean,
            "log_density_std": self.log_density_std,
            "active_group_count": self.active_group_count,
            "hard_soft_gap": self.hard_soft_gap,
            "per_group": self.per_group,
        }


def _mean_std(values):
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else None
    return mean, std


def validity_metric(classifier, X_cf, target_class):
    """Fraction of rows the classifier assigns to the target class."""
    X_cf = as_float_matrix(X_cf)
    return float((classifier.predict(X_cf) == target_class).mean())


def proximity_metric(X0, X_cf):
    """Mean and std of row-wise Euclidean distances (standardized space)."""
    X0 = as_float_matrix(X0)
    X_cf = as_float_matrix(X_cf)
    if X0.shape != X_cf.shape:
        raise ValueError("proximity_metric expects equal shapes")
    return _mean_std(np.linalg.norm(X_cf - X0, axis=1))


def prob_plausibility_metric(flow, X_cf, target_class, log_density_threshold):
    """Fraction of rows whose class-conditional log-density meets the threshold."""
    X_cf = as_float_matrix(X_cf)
    logd = flow.log_density(X_cf, target_class)
    return float((logd >= log_density_threshold).mean())


def log_density_metric(flow, X_cf, target_class):
    """Mean and std of log p(x' | y') over rows."""
    X_cf = as_float_matrix(X_cf)
    return _mean_std(flow.log_density(X_cf, target_class))


def group_metrics(solution):
    """Per-group metric rows plus the active group count."""
    rows = []
    ids, counts = np.unique(solution.group_index, return_counts=True)
    order = np.lexsort((ids, -counts))
    for pos in order:
        gid = int(ids[pos])
        members = solution.group_index == gid
        entry = {
            "group_id": gid,
            "size": int(counts[pos]),
            "validity": float(solution.valid[members].mean()),
            "proximity_mean": float(solution.l2[members].mean()),
            "prob_plausibility": float(solution.plausible[members].mean()),
            "mean_magnitude": float(solution.magnitudes[members].mean()),
        }
        logd = solution.log_density[members]
        entry["log_density_mean"] = (
            float(logd.mean()) if np.isfinite(logd).all() else None
        )
        rows.append(entry)
    return rows, len(rows)


def solution_report(solution, wall_clock_seconds=None, include_groups=True):
    """Aggregate a CfSolution into a MetricReport."""
    covered = solution.covered
    coverage = float(covered.mean())
    validity = float(solution.valid[covered].mean()) if covered.any() else 0.0
    prox_mean, prox_std = _mean_std(solution.l2)
    if np.isfinite(solution.log_density).all():
        logd_mean, logd_std = _mean_std(solution.log_density)
    else:
        logd_mean, logd_std = None, None
    per_group, active = (
        group_metrics(solution) if include_groups else ([], solution.active_group_count)
    )
    return MetricReport(
        n_instances=solution.n_instances,
        coverage=coverage,
        validity=validity,
        validity_all=float(solution.valid.mean()),
        proximity_mean=prox_mean,
        proximity_std=prox_std,
        prob_plausibility=float(solution.plausible.mean()),
        log_density_mean=logd_mean,
        log_density_std=logd_std,
        active_group_count=solution.active_group_count,
        hard_soft_gap=solution.hard_soft_gap,
        wall_clock_seconds=wall_clock_seconds,
        per_group=per_group,
    )
