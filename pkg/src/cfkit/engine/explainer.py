"""Gradient-based counterfactual explainer over one unified objective.

One optimizer covers all three granularities. The mode decides which
parameters are free and what the regularizer weights default to:

- ``local``: one base shift per instance, magnitudes fixed at one, no
  assignment machinery, entropy and diversity weights default to zero.
- ``global``: a single base shift for all instances, optional per-instance
  magnitudes; entropy weights are structurally zero, diversity defaults to
  zero.
- ``group``: ``k_max`` base shifts, a sparsemax-assigned probability row per
  instance, per-instance magnitudes; entropy and diversity regularizers on.

Optimization always runs on soft assignments; the returned solution uses the
hard (argmax) assignment, whose loss gap against the soft objective is
measured and reported.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .. import autodiff as ad
from ..adam import Adam
from ..exceptions import ConfigError, DataError, NumericError
from ..validation import as_float_matrix, check_fitted
from .constraints import ConstraintSet
from .objective import (
    ObjectiveWeights,
    compose_counterfactuals,
    per_row_objective,
    total_objective,
)

MODES = ("local", "global", "group")

_WEIGHT_PRESETS = {
    # mode -> (assignment, group_count, diversity) defaults
    "local": (0.0, 0.0, 0.0),
    "global": (0.0, 0.0, 0.0),
    "group": (1e4, 1e3, 1e2),
}


@dataclass
class CfSolution:
    """Optimized counterfactuals with assignments, magnitudes and flags."""

    mode: str
    target_class: int
    factuals: np.ndarray
    counterfactuals: np.ndarray
    base_shifts: np.ndarray
    magnitudes: np.ndarray
    assignment_probs: np.ndarray
    group_index: np.ndarray
    valid: np.ndarray
    plausible: np.ndarray
    covered: np.ndarray
    log_density: np.ndarray
    l2: np.ndarray
    active_group_count: int
    loss_trace: np.ndarray
    n_iterations: int
    hard_soft_gap: float
    log_density_threshold: float
    kept_index: np.ndarray
    infeasible_rows: list = field(default_factory=list)

    @property
    def n_instances(self):
        return self.counterfactuals.shape[0]


class CounterfactualExplainer(BaseEstimator, TransformerMixin):
    """Finds counterfactuals for standardized factual rows.

    The classifier and (when plausibility is weighted) the flow must be
    trained on the same standardized feature space as the rows passed to
    ``fit``. The explainer is transductive: ``transform`` only accepts the
    exact matrix it was fitted on.
    """

    def __init__(self, classifier=None, flow=None, target_class=1,
                 mode="local", k_max=None, auto_group_count=True,
                 use_magnitude=None, lambda_validity=1e5,
                 lambda_plausibility=1e4, lambda_assignment=None,
                 lambda_group_count=None, lambda_diversity=None,
                 margin=0.1, det_jitter=1e-6, distance="l2",
                 learning_rate=0.05, lr_decay="cosine", max_iters=1000,
                 tol=1e-6, stall_patience=50, grad_clip=1.0,
                 plausibility_warmup=0.3, plausibility_margin=1.0,
                 log_density_threshold=None, constraints=None, scaler=None,
                 on_target="error", seed=0):
        self.classifier = classifier
        self.flow = flow
        self.target_class = target_class
        self.mode = mode
        self.k_max = k_max
        self.auto_group_count = auto_group_count
        self.use_magnitude = use_magnitude
        self.lambda_validity = lambda_validity
        self.lambda_plausibility = lambda_plausibility
        self.lambda_assignment = lambda_assignment
        self.lambda_group_count = lambda_group_count
        self.lambda_diversity = lambda_diversity
        self.margin = margin
        self.det_jitter = det_jitter
        self.distance = distance
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.max_iters = max_iters
        self.tol = tol
        self.stall_patience = stall_patience
        self.grad_clip = grad_clip
        self.plausibility_warmup = plausibility_warmup
        self.plausibility_margin = plausibility_margin
        self.log_density_threshold = log_density_threshold
        self.constraints = constraints
        self.scaler = scaler
        self.on_target = on_target
        self.seed = seed

    # ------------------------------------------------------------------
    def _resolve(self, n_instances):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected {MODES}")
        if self.classifier is None:
            raise ConfigError("a trained classifier is required")
        if not (0.0 < self.margin < 1.0):
            raise ConfigError("margin must lie in (0, 1)")
        if self.det_jitter <= 0:
            raise ConfigError("det_jitter must be positive")

        preset_s, preset_k, preset_d = _WEIGHT_PRESETS[self.mode]
        lam_s = preset_s if self.lambda_assignment is None else self.lambda_assignment
        lam_k = preset_k if self.lambda_group_count is None else self.lambda_group_count
        if self.mode == "group" and not self.auto_group_count \
                and self.lambda_group_count is None:
            lam_k = 0.0
        lam_d = preset_d if self.lambda_diversity is None else self.lambda_diversity
        weights = ObjectiveWeights(
            validity=self.lambda_validity,
            plausibility=self.lambda_plausibility,
            assignment=lam_s,
            group_count=lam_k,
            diversity=lam_d,
        )

        if self.mode == "local":
            k = n_instances
            magnitude = False
            if self.use_magnitude:
                raise ConfigError("local mode fixes all magnitudes to one")
        elif self.mode == "global":
            k = 1
            magnitude = True if self.use_magnitude is None else self.use_magnitude
        else:
            k = 10 if self.k_max is None else int(self.k_max)
            if not 1 <= k <= n_instances:
                raise ConfigError(
                    f"k_max={k} must lie in [1, n_instances={n_instances}]"
                )
            magnitude = True if self.use_magnitude is None else self.use_magnitude

        if weights.plausibility > 0:
            if self.flow is None:
                raise ConfigError("plausibility weight > 0 requires a flow")
            if self.log_density_threshold is None:
                raise ConfigError(
                    "plausibility weight > 0 requires log_density_threshold"
                )
        return weights, k, magnitude

    # ------------------------------------------------------------------
    def fit(self, X, y=None):
        X = as_float_matrix(X)
        self._fit_input = X.copy()

        preds = self.classifier.predict(X)
        at_target = preds == self.target_class
        if at_target.any():
            if self.on_target == "error":
                raise DataError(
                    f"{int(at_target.sum())} rows are already classified as "
                    f"class {self.target_class}; filter them or pass "
                    "on_target='filter'"
                )
            warnings.warn(
                f"excluding {int(at_target.sum())} rows already classified as "
                f"the target class; their counterfactual is the identity",
                stacklevel=2,
            )

        constraints = self.constraints
        if constraints is None:
            constraints = ConstraintSet([f"x{i}" for i in range(X.shape[1])])
        if len(constraints.feature_names) != X.shape[1]:
            raise ConfigError("constraint list length does not match features")
        box = constraints.standardized_box(self.scaler)

        keep = ~at_target
        infeasible = []
        for row, msg in constraints.infeasible_rows(X, box):
            if keep[row]:
                infeasible.append((int(row), msg))
                keep[row] = False
        kept_index = np.nonzero(keep)[0]
        if kept_index.size == 0:
            raise DataError("no feasible rows left to explain")

        solution = self._optimize(X[kept_index], constraints, box, kept_index)
        solution.infeasible_rows = infeasible
        self.solution_ = solution
        self.counterfactuals_ = solution.counterfactuals
        return self

    def transform(self, X):
        """Counterfactual rows for the fitted input (identity for excluded rows)."""
        check_fitted(self, "solution_")
        X = as_float_matrix(X)
        if not np.array_equal(X, self._fit_input):
            raise ConfigError(
                "transform expects the exact matrix the explainer was fitted on"
            )
        out = X.copy()
        out[self.solution_.kept_index] = self.solution_.counterfactuals
        return out

    # ------------------------------------------------------------------
    def _optimize(self, X0, constraints, box, kept_index):
        weights, k, magnitude = self._resolve(X0.shape[0])
        n, d = X0.shape
        rng = np.random.default_rng(self.seed)

        # draw order is fixed so modes sharing a seed share the base-shift init
        raw = ad.Tensor(rng.normal(0.0, 0.01, size=(k, d)) if self.mode != "local"
                        else rng.normal(0.0, 0.01, size=(n, d)),
                        requires_grad=True)
        params = [raw]
        h = None
        if magnitude:
            h = ad.Tensor(np.zeros(n), requires_grad=True)
            params.append(h)
        b = None
        if self.mode == "group":
            b = ad.Tensor(rng.normal(0.0, 0.01, size=(n, k)), requires_grad=True)
            params.append(b)

        x0_const = ad.Tensor(X0)
        fixed_probs = np.ones((n, 1)) if self.mode == "global" else None

        # optimize against a slightly raised density bar: Adam dithers rows
        # around the hinge boundary, and the raised bar keeps that dithering
        # strictly feasible under the reported threshold (same role the
        # validity margin plays for the argmax metric)
        threshold = self.log_density_threshold
        if threshold is not None:
            threshold = threshold + self.plausibility_margin

        # rows are independent subproblems in local mode, so each can keep
        # the best iterate it ever visited instead of sharing one global best
        row_separable = self.mode == "local" and weights.diversity == 0

        def build_loss(step_weights, surrogate=None):
            base = constraints.materialize_t(raw)
            assignment = b if b is not None else fixed_probs
            x_cf = compose_counterfactuals(x0_const, base, assignment, h, box)
            if row_separable:
                return per_row_objective(
                    x0_const, x_cf, self.classifier, self.flow,
                    self.target_class, step_weights, self.margin, threshold,
                    distance=self.distance, validity_surrogate=surrogate,
                )
            loss = total_objective(
                x0_const, x_cf, self.classifier, self.flow, self.target_class,
                step_weights, self.margin, threshold, base,
                assignment_logits=b, assignment_probs=fixed_probs,
                distance=self.distance, det_jitter=self.det_jitter,
                validity_surrogate=surrogate,
            )
            return loss, None

        # warmup phase: plausibility off, and validity swapped for a
        # cross-entropy pull whose gradient survives classifier saturation;
        # rows travel into the target region before the density force (whose
        # far field is treacherous) engages on the full objective
        warmup = 0
        if weights.plausibility > 0 and weights.validity > 0 \
                and self.plausibility_warmup:
            warmup = int(round(self.plausibility_warmup * self.max_iters))

        opt = Adam(params, lr=self.learning_rate)
        trace = []
        best_loss = np.inf
        best_state = opt.state_copy()
        best_rows = np.full(n, np.inf)
        best_row_shift = raw.data.copy()
        stale = 0
        try:
            for it in range(self.max_iters):
                if it == warmup and warmup:
                    # fresh optimizer moments for the full objective
                    opt = Adam(params, lr=opt.lr)
                if self.lr_decay == "cosine":
                    # large steps to travel, small steps to settle onto the
                    # narrow high-density ridge
                    opt.lr = 0.5 * self.learning_rate * (
                        1.0 + np.cos(np.pi * it / self.max_iters)
                    )
                step_weights, surrogate = weights, None
                if it < warmup:
                    # unit cross-entropy weight balances the distance pull at
                    # p(target) ~ 0.9, landing rows inside the target region
                    step_weights = replace(weights, plausibility=0.0,
                                           validity=1.0)
                    surrogate = "cross-entropy"
                opt.zero_grad()
                loss_t, row_losses = build_loss(step_weights, surrogate)
                loss = float(loss_t.data)
                trace.append(loss)
                if it >= warmup:
                    if row_losses is not None:
                        improved = row_losses < best_rows
                        best_rows[improved] = row_losses[improved]
                        best_row_shift[improved] = raw.data[improved]
                    if loss < best_loss:
                        if best_loss - loss > self.tol:
                            stale = 0
                        else:
                            stale += 1
                        best_loss = loss
                        best_state = opt.state_copy()
                    else:
                        stale += 1
                if stale >= self.stall_patience:
                    break
                ad.backward(loss_t)
                if self.grad_clip is not None:
                    # hinge gradients span many orders of magnitude over a
                    # run; unclipped spikes poison Adam's second moment and
                    # freeze the affected rows for hundreds of steps
                    for p in params:
                        if p.grad is not None:
                            np.clip(p.grad, -self.grad_clip, self.grad_clip,
                                    out=p.grad)
                opt.step()
        except NumericError as err:
            raise NumericError(
                f"optimization diverged: {err}",
                iteration=len(trace),
                last_finite_loss=trace[-1] if trace else None,
            ) from None
        opt.load(best_state)
        if row_separable and np.isfinite(best_rows).all():
            raw.data = best_row_shift
            best_loss = float(best_rows.sum())

        return self._finalize(X0, constraints, box, kept_index, weights,
                              raw, h, b, fixed_probs, magnitude,
                              np.asarray(trace), best_loss, threshold)

    def _finalize(self, X0, constraints, box, kept_index, weights,
                  raw, h, b, fixed_probs, magnitude, trace, soft_loss,
                  opt_threshold):
        n, d = X0.shape
        base_shifts = constraints.materialize_t(ad.Tensor(raw.data)).data
        magnitudes = np.exp(h.data) if magnitude else np.ones(n)

        if self.mode == "local":
            probs = None
            group_index = np.arange(n)
            hard_shift = base_shifts
            active = n
        else:
            if b is not None:
                probs = ad.sparsemax(ad.Tensor(b.data)).data
            else:
                probs = fixed_probs
            group_index = probs.argmax(axis=1)
            hard_shift = base_shifts[group_index]
            active = int(np.unique(group_index).size)
        scaled = magnitudes[:, None] * hard_shift
        x_cf = X0 + scaled
        if box is not None:
            x_cf = np.clip(x_cf, box[0], box[1])
        frozen = constraints.frozen_mask
        if frozen.any():
            x_cf[:, frozen] = X0[:, frozen]

        # loss with hard assignments, for the hard/soft consistency gap
        hard_probs = None
        if self.mode != "local":
            hard_probs = np.zeros_like(probs)
            hard_probs[np.arange(n), group_index] = 1.0
        x_cf_t = compose_counterfactuals(
            ad.Tensor(X0), ad.Tensor(base_shifts), hard_probs,
            ad.Tensor(np.log(magnitudes)) if magnitude else None, box,
        )
        hard_loss = float(total_objective(
            ad.Tensor(X0), x_cf_t, self.classifier, self.flow,
            self.target_class, weights, self.margin,
            opt_threshold, ad.Tensor(base_shifts),
            assignment_probs=hard_probs, distance=self.distance,
            det_jitter=self.det_jitter,
        ).data)
        gap = abs(hard_loss - soft_loss) / max(abs(soft_loss), 1e-12)

        valid = self.classifier.predict(x_cf) == self.target_class
        if self.flow is not None and self.log_density_threshold is not None:
            log_density = self.flow.log_density(x_cf, self.target_class)
            plausible = log_density >= self.log_density_threshold
            threshold = float(self.log_density_threshold)
        elif self.flow is not None:
            log_density = self.flow.log_density(x_cf, self.target_class)
            plausible = np.ones(n, dtype=bool)
            threshold = -np.inf
        else:
            log_density = np.full(n, np.nan)
            plausible = np.ones(n, dtype=bool)
            threshold = -np.inf

        return CfSolution(
            mode=self.mode,
            target_class=int(self.target_class),
            factuals=X0.copy(),
            counterfactuals=x_cf,
            base_shifts=base_shifts,
            magnitudes=magnitudes,
            assignment_probs=probs if probs is not None else np.eye(n),
            group_index=group_index,
            valid=valid,
            plausible=plausible,
            covered=valid & plausible,
            log_density=log_density,
            l2=np.linalg.norm(x_cf - X0, axis=1),
            active_group_count=active,
            loss_trace=trace,
            n_iterations=len(trace),
            hard_soft_gap=gap,
            log_density_threshold=threshold,
            kept_index=kept_index,
        )
