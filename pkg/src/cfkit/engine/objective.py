"""Loss terms of the unified counterfactual objective.

The total objective is

    distance + lambda_v * validity + lambda_p * plausibility
    + lambda_s * assignment_entropy + lambda_k * group_count_entropy
    + lambda_d * diversity

evaluated on soft sparsemax assignments during optimization. Terms with zero
weight are omitted entirely.
"""

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad

TINY = ad.ENTROPY_TINY


@dataclass
class ObjectiveWeights:
    validity: float = 1e5
    plausibility: float = 1e4
    assignment: float = 1e4
    group_count: float = 1e3
    diversity: float = 1e2

    def __post_init__(self):
        for name in ("validity", "plausibility", "assignment",
                     "group_count", "diversity"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be >= 0")


def distance_rows(x0, x_cf, kind="l2"):
    diff = ad.sub(x_cf, x0)
    if kind == "l2":
        return ad.l2_norm_rows(diff)
    if kind == "l1":
        return ad.l1_norm_rows(diff)
    raise ValueError(f"unknown distance kind {kind!r}")


def distance_term(x0, x_cf, kind="l2"):
    """Sum over rows of the L2 (default) or L1 norm of the shift."""
    return ad.tsum(distance_rows(x0, x_cf, kind))


def validity_rows(classifier, x_cf, target_class, margin):
    probs = classifier.predict_proba_t(x_cf)
    n_classes = probs.shape[1]
    onehot = np.zeros(n_classes)
    onehot[target_class] = 1.0
    p_target = ad.tsum(ad.mul(probs, ad.Tensor(onehot)), axis=1)
    p_best_other = ad.tmax(ad.mul(probs, ad.Tensor(1.0 - onehot)), axis=1)
    return ad.relu(ad.add(ad.sub(p_best_other, p_target), margin))


def validity_term(classifier, x_cf, target_class, margin):
    """Hinge on the margin to the best competing class.

    Zero iff p(target | x) exceeds every other class probability by at least
    ``margin`` on every row.
    """
    return ad.tsum(validity_rows(classifier, x_cf, target_class, margin))


def target_cross_entropy_term(classifier, x_cf, target_class):
    """Sum of -log p(target | x) over rows, computed in logit space.

    Unlike the margin hinge, its gradient stays alive under a saturated
    classifier, which makes it the travel loss of choice during warmup.
    """
    logits = classifier._logits_t(x_cf)
    log_probs = ad.log_softmax(logits)
    onehot = np.zeros(log_probs.shape[1])
    onehot[target_class] = 1.0
    return ad.neg(ad.tsum(ad.mul(log_probs, ad.Tensor(onehot))))


def plausibility_rows(flow, x_cf, target_class, log_density_threshold):
    logp = flow.log_density_t(x_cf, target_class)
    return ad.relu(ad.sub(float(log_density_threshold), logp))


def plausibility_term(flow, x_cf, target_class, log_density_threshold):
    """Hinge on the class-conditional log-density shortfall below the threshold."""
    return ad.tsum(plausibility_rows(flow, x_cf, target_class, log_density_threshold))


def _entropy_of_rows(probs):
    return ad.neg(ad.tsum(ad.mul(probs, ad.log(ad.add(probs, TINY)))))


def assignment_entropy(assignment_logits):
    """Row entropies of the sparsemax assignment; zero iff every row is one-hot."""
    return assignment_entropy_p(ad.sparsemax(assignment_logits))


def assignment_entropy_p(probs):
    return _entropy_of_rows(probs)


def group_count_entropy(assignment_logits):
    """Entropy of the normalized per-group probability mass."""
    return group_count_entropy_p(ad.sparsemax(assignment_logits))


def group_count_entropy_p(probs):
    column_mass = ad.tsum(probs, axis=0)
    total = ad.tsum(column_mass)
    share = ad.div(column_mass, total)
    return _entropy_of_rows(share)


def diversity_term(base_shifts, det_jitter=1e-6):
    """Negative log-determinant of the base-shift Gram matrix (plus jitter)."""
    k = base_shifts.shape[0]
    gram = ad.add(
        ad.matmul(base_shifts, ad.transpose(base_shifts)),
        ad.Tensor(det_jitter * np.eye(k)),
    )
    return ad.neg(ad.cholesky_logdet(gram))


def per_row_objective(x0, x_cf, classifier, flow, target_class, weights,
                      margin, log_density_threshold, distance="l2",
                      validity_surrogate=None):
    """Row-separable objective; returns (scalar tensor, per-row ndarray).

    Valid only when every weighted term decomposes over rows (no entropy or
    diversity regularizers), as in local mode.
    """
    d_rows = distance_rows(x0, x_cf, distance)
    loss = ad.tsum(d_rows)
    rows = d_rows.data.copy()
    if weights.validity > 0:
        if validity_surrogate == "cross-entropy":
            logits = classifier._logits_t(x_cf)
            log_probs = ad.log_softmax(logits)
            onehot = np.zeros(log_probs.shape[1])
            onehot[target_class] = 1.0
            v_rows = ad.neg(ad.tsum(ad.mul(log_probs, ad.Tensor(onehot)), axis=1))
        else:
            v_rows = validity_rows(classifier, x_cf, target_class, margin)
        loss = ad.add(loss, ad.mul(ad.tsum(v_rows), weights.validity))
        rows += weights.validity * v_rows.data
    if weights.plausibility > 0:
        p_rows = plausibility_rows(flow, x_cf, target_class, log_density_threshold)
        loss = ad.add(loss, ad.mul(ad.tsum(p_rows), weights.plausibility))
        rows += weights.plausibility * p_rows.data
    return loss, rows


def compose_counterfactuals(x0, base_shifts, assignment=None,
                            magnitude_logits=None, box=None):
    """Assemble counterfactual rows from base shifts.

    assignment: None aligns base-shift rows with instances (local form);
    an ndarray is a fixed probability/selection matrix; a Tensor holds
    assignment logits passed through sparsemax. ``box`` clamps rows into
    standardized bounds with pass-through gradients inside the box.
    """
    if assignment is None:
        shift = base_shifts
    else:
        if isinstance(assignment, ad.Tensor):
            probs = ad.sparsemax(assignment)
        else:
            probs = ad.Tensor(assignment)
        shift = ad.matmul(probs, base_shifts)
    if magnitude_logits is not None:
        scale_col = ad.reshape(ad.exp(magnitude_logits), (-1, 1))
        ones_row = ad.Tensor(np.ones((1, shift.shape[1])))
        shift = ad.mul(ad.matmul(scale_col, ones_row), shift)
    x_cf = ad.add(x0, shift)
    if box is not None:
        x_cf = ad.clip_box(x_cf, box[0], box[1])
    return x_cf


def total_objective(x0, x_cf, classifier, flow, target_class, weights,
                    margin, log_density_threshold, base_shifts,
                    assignment_logits=None, assignment_probs=None,
                    distance="l2", det_jitter=1e-6,
                    validity_surrogate=None):
    """Sum the weighted loss terms; zero-weight terms contribute nothing."""
    loss = distance_term(x0, x_cf, distance)
    if weights.validity > 0:
        if validity_surrogate == "cross-entropy":
            vterm = target_cross_entropy_term(classifier, x_cf, target_class)
        else:
            vterm = validity_term(classifier, x_cf, target_class, margin)
        loss = ad.add(loss, ad.mul(vterm, weights.validity))
    if weights.plausibility > 0:
        loss = ad.add(loss, ad.mul(
            plausibility_term(flow, x_cf, target_class, log_density_threshold),
            weights.plausibility))
    multi_group = (
        (assignment_logits is not None and assignment_logits.shape[1] > 1)
        or (assignment_probs is not None and assignment_probs.shape[1] > 1)
    )
    if multi_group:
        if assignment_logits is not None:
            probs_t = ad.sparsemax(assignment_logits)
        else:
            probs_t = ad.Tensor(assignment_probs)
        if weights.assignment > 0:
            loss = ad.add(loss, ad.mul(assignment_entropy_p(probs_t),
                                       weights.assignment))
        if weights.group_count > 0:
            loss = ad.add(loss, ad.mul(group_count_entropy_p(probs_t),
                                       weights.group_count))
    if weights.diversity > 0:
        loss = ad.add(loss, ad.mul(diversity_term(base_shifts, det_jitter),
                                   weights.diversity))
    return loss
