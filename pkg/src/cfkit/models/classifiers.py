"""Differentiable probabilistic classifiers trained on the autodiff tape.

Both models expose sklearn-style ``fit``/``predict``/``predict_proba`` plus a
tape-aware ``predict_proba_t`` so downstream objectives can differentiate
class probabilities with respect to the inputs.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .. import autodiff as ad
from ..adam import Adam
from ..exceptions import DataError
from ..validation import (
    as_float_matrix,
    as_label_vector,
    check_classes,
    check_feature_count,
    check_fitted,
)

MLP_HIDDEN = (256, 256)


def _cross_entropy(log_probs, onehot):
    n = onehot.shape[0]
    return ad.neg(ad.tsum(ad.mul(log_probs, ad.Tensor(onehot)))) * (1.0 / n)


class _GradientClassifier(BaseEstimator, ClassifierMixin):
    kind = None

    def __init__(self, max_epochs=1000, learning_rate=1e-3, batch_size=128,
                 patience=20, min_delta=1e-4, val_fraction=0.1, seed=0):
        self.max_epochs = max_epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.patience = patience
        self.min_delta = min_delta
        self.val_fraction = val_fraction
        self.seed = seed

    # subclass hooks -------------------------------------------------------
    def _init_params(self, n_features, n_classes, rng):
        raise NotImplementedError

    def _logits_t(self, x):
        raise NotImplementedError

    def _param_tensors(self):
        raise NotImplementedError

    # ----------------------------------------------------------------------
    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_label_vector(y, X.shape[0])
        if y.min() < 0:
            raise DataError("labels must be nonnegative integers")
        n_classes = int(y.max()) + 1
        if len(np.unique(y)) < 2:
            raise DataError("training data contains a single class")

        rng = np.random.default_rng(self.seed)
        self.n_features_ = X.shape[1]
        self.n_classes_ = n_classes
        self.classes_ = np.arange(n_classes)
        self._init_params(self.n_features_, n_classes, rng)

        n = X.shape[0]
        order = rng.permutation(n)
        n_val = int(round(self.val_fraction * n)) if n >= 20 else 0
        val_idx, train_idx = order[:n_val], order[n_val:]
        X_tr, y_tr = X[train_idx], y[train_idx]
        X_val, y_val = X[val_idx], y[val_idx]
        if len(np.unique(y_tr)) < 2:
            raise DataError("training split contains a single class")

        onehot_tr = np.eye(n_classes)[y_tr]
        params = self._param_tensors()
        opt = Adam(params, lr=self.learning_rate)
        batch = self.batch_size or len(X_tr)

        best = np.inf
        best_state = [p.data.copy() for p in params]
        stale = 0
        self.epochs_run_ = 0
        for epoch in range(self.max_epochs):
            perm = rng.permutation(len(X_tr))
            for start in range(0, len(X_tr), batch):
                idx = perm[start:start + batch]
                opt.zero_grad()
                logits = self._logits_t(ad.Tensor(X_tr[idx]))
                loss = _cross_entropy(ad.log_softmax(logits), onehot_tr[idx])
                ad.backward(loss)
                opt.step()
            self.epochs_run_ = epoch + 1
            monitor = self._nll(X_val, y_val) if n_val else self._nll(X_tr, y_tr)
            if best - monitor > self.min_delta:
                best = monitor
                best_state = [p.data.copy() for p in params]
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        for p, s in zip(params, best_state):
            p.data = s

        self.train_accuracy_ = float((self.predict(X_tr) == y_tr).mean())
        self.val_accuracy_ = (
            float((self.predict(X_val) == y_val).mean()) if n_val else None
        )
        return self

    def _nll(self, X, y):
        logits = self._logits_t(ad.Tensor(X))
        log_probs = ad.log_softmax(logits).data
        return float(-log_probs[np.arange(len(y)), y].mean())

    def predict_proba_t(self, x):
        """Row-stochastic probabilities as a tape tensor (differentiable)."""
        check_fitted(self, "n_features_")
        if x.shape[1] != self.n_features_:
            raise DataError(
                f"input has {x.shape[1]} features, model expects {self.n_features_}"
            )
        return ad.softmax(self._logits_t(x), axis=1)

    def predict_proba(self, X):
        X = as_float_matrix(X)
        check_fitted(self, "n_features_")
        check_feature_count(X, self.n_features_)
        return self.predict_proba_t(ad.Tensor(X)).data

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def score(self, X, y):
        y = as_label_vector(y, np.asarray(X).shape[0])
        check_classes(y, self.n_classes_)
        return float((self.predict(X) == y).mean())


class LogisticClassifier(_GradientClassifier):
    """Multinomial logistic regression: softmax(x W + b)."""

    kind = "logistic-regression"

    def _init_params(self, n_features, n_classes, rng):
        self.W_ = ad.Tensor(np.zeros((n_features, n_classes)), requires_grad=True)
        self.b_ = ad.Tensor(np.zeros(n_classes), requires_grad=True)

    def _logits_t(self, x):
        return ad.add(ad.matmul(x, self.W_), self.b_)

    def _param_tensors(self):
        return [self.W_, self.b_]


class MlpClassifier(_GradientClassifier):
    """Two dense hidden layers of 256 ReLU units with a softmax output."""

    kind = "mlp"

    def _init_params(self, n_features, n_classes, rng):
        sizes = [n_features, *MLP_HIDDEN, n_classes]
        self.weights_ = []
        self.biases_ = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            self.weights_.append(ad.Tensor(w, requires_grad=True))
            self.biases_.append(ad.Tensor(np.zeros(fan_out), requires_grad=True))

    def _logits_t(self, x):
        h = x
        last = len(self.weights_) - 1
        for i, (w, b) in enumerate(zip(self.weights_, self.biases_)):
            h = ad.add(ad.matmul(h, w), b)
            if i < last:
                h = ad.relu(h)
        return h

    def _param_tensors(self):
        return [t for pair in zip(self.weights_, self.biases_) for t in pair]


def train_classifier(X, y, kind, **config):
    """Train a classifier of the requested kind on standardized features."""
    if kind == "logistic-regression":
        model = LogisticClassifier(**config)
    elif kind == "mlp":
        model = MlpClassifier(**config)
    else:
        raise DataError(f"unknown classifier kind {kind!r}")
    return model.fit(X, y)
