"""Conditional normalizing flow with affine coupling layers.

The flow models p(x | y) for standardized features. Each coupling layer
leaves a masked half of the coordinates untouched and applies an affine map
to the rest; scale and translation come from a small conditioner network fed
with the masked coordinates concatenated with a one-hot class label. The
base distribution is a standard normal, so the exact log-density follows
from the change-of-variables formula: the latent log-density minus the sum
of per-layer log-scale outputs accumulated on the inverse pass.

Scale outputs are bounded through ``scale_bound * tanh`` before
exponentiation, which caps the per-layer log-determinant and keeps
negative-log-likelihood training stable. Conditioner output layers start at
zero, so an untrained flow is exactly the identity map.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .. import autodiff as ad
from ..adam import Adam
from ..exceptions import DataError
from ..validation import as_float_matrix, as_label_vector, check_fitted

LOG_2PI = float(np.log(2.0 * np.pi))


class ConditionalAffineFlow(BaseEstimator):
    """Invertible density model giving exact log p(x | y)."""

    def __init__(self, n_layers=6, hidden_units=64, max_epochs=1000,
                 learning_rate=1e-3, batch_size=128, patience=20,
                 min_delta=1e-4, val_fraction=0.1, val_every=5,
                 scale_bound=3.0, seed=0):
        self.n_layers = n_layers
        self.hidden_units = hidden_units
        self.max_epochs = max_epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.patience = patience
        self.min_delta = min_delta
        self.val_fraction = val_fraction
        self.val_every = val_every
        self.scale_bound = scale_bound
        self.seed = seed

    # ------------------------------------------------------------------
    def _init_params(self, n_features, n_classes, rng):
        self.masks_ = [
            ((np.arange(n_features) + k) % 2).astype(np.float64)
            for k in range(self.n_layers)
        ]
        self.layers_ = []
        d_in = n_features + n_classes
        for _ in range(self.n_layers):
            w1 = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, self.hidden_units))
            self.layers_.append({
                "w1": ad.Tensor(w1, requires_grad=True),
                "b1": ad.Tensor(np.zeros(self.hidden_units), requires_grad=True),
                # zero output layer: the untrained flow is the identity
                "w2": ad.Tensor(np.zeros((self.hidden_units, 2 * n_features)),
                                requires_grad=True),
                "b2": ad.Tensor(np.zeros(2 * n_features), requires_grad=True),
            })

    def _param_tensors(self):
        return [layer[key] for layer in self.layers_
                for key in ("w1", "b1", "w2", "b2")]

    def _onehot(self, y, n_rows):
        y = np.asarray(y)
        if y.ndim == 0:
            y = np.full(n_rows, int(y))
        y = as_label_vector(y, n_rows)
        if y.min() < 0 or y.max() >= self.n_classes_:
            raise DataError(
                f"class labels outside 0..{self.n_classes_ - 1}"
            )
        return np.eye(self.n_classes_)[y]

    def _scale_translate(self, x_t, onehot, layer, mask):
        """Conditioner outputs (s, t), both zero on the masked coordinates."""
        keep = ad.Tensor(mask)
        move = ad.Tensor(1.0 - mask)
        masked = ad.mul(x_t, keep)
        inp = ad.concat_cols(masked, ad.Tensor(onehot))
        h = ad.relu(ad.add(ad.matmul(inp, layer["w1"]), layer["b1"]))
        out = ad.add(ad.matmul(h, layer["w2"]), layer["b2"])
        d = x_t.shape[1]
        s_raw = ad.slice_cols(out, 0, d)
        t_raw = ad.slice_cols(out, d, 2 * d)
        s = ad.mul(ad.mul(ad.tanh(s_raw), move), self.scale_bound)
        t = ad.mul(t_raw, move)
        return s, t, keep, move

    def _to_latent_t(self, x_t, onehot):
        """Inverse pass x -> z, accumulating the forward log-determinant."""
        logdet = ad.Tensor(np.zeros(x_t.shape[0]))
        z = x_t
        for layer, mask in zip(reversed(self.layers_), reversed(self.masks_)):
            s, t, keep, move = self._scale_translate(z, onehot, layer, mask)
            moved = ad.mul(ad.mul(ad.sub(z, t), ad.exp(ad.neg(s))), move)
            z = ad.add(ad.mul(z, keep), moved)
            logdet = ad.add(logdet, ad.tsum(s, axis=1))
        return z, logdet

    def _from_latent_t(self, z_t, onehot):
        x = z_t
        for layer, mask in zip(self.layers_, self.masks_):
            s, t, keep, move = self._scale_translate(x, onehot, layer, mask)
            moved = ad.mul(ad.add(ad.mul(x, ad.exp(s)), t), move)
            x = ad.add(ad.mul(x, keep), moved)
        return x

    # ------------------------------------------------------------------
    def log_density_t(self, x_t, y):
        """Per-row log p(x | y) as a tape tensor (differentiable in x)."""
        check_fitted(self, "layers_")
        if x_t.shape[1] != self.n_features_:
            raise DataError(
                f"input has {x_t.shape[1]} features, flow expects {self.n_features_}"
            )
        onehot = self._onehot(y, x_t.shape[0])
        z, logdet = self._to_latent_t(x_t, onehot)
        base = ad.sub(
            ad.mul(ad.tsum(ad.mul(z, z), axis=1), -0.5),
            0.5 * self.n_features_ * LOG_2PI,
        )
        return ad.sub(base, logdet)

    def log_density(self, X, y):
        X = as_float_matrix(X)
        return self.log_density_t(ad.Tensor(X), y).data

    def to_latent(self, X, y):
        """Map data to latent space; returns (Z, forward log-determinant)."""
        X = as_float_matrix(X)
        z, logdet = self._to_latent_t(ad.Tensor(X), self._onehot(y, X.shape[0]))
        return z.data, logdet.data

    def from_latent(self, Z, y):
        Z = as_float_matrix(Z)
        return self._from_latent_t(ad.Tensor(Z), self._onehot(y, Z.shape[0])).data

    def nll(self, X, y):
        """Total negative log-likelihood of (X, y) under the flow."""
        return float(-self.log_density(X, y).sum())

    # ------------------------------------------------------------------
    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_label_vector(y, X.shape[0])
        if X.shape[1] < 2:
            raise DataError("flow requires at least 2 features")
        zero_var = np.nonzero(X.std(axis=0) == 0.0)[0]
        if zero_var.size:
            raise DataError(
                f"features {zero_var.tolist()} have zero variance; "
                "drop or standardize them before training the flow"
            )
        self.n_features_ = X.shape[1]
        self.n_classes_ = int(y.max()) + 1

        rng = np.random.default_rng(self.seed)
        self._init_params(self.n_features_, self.n_classes_, rng)

        n = X.shape[0]
        order = rng.permutation(n)
        n_val = int(round(self.val_fraction * n)) if n >= 20 else 0
        val_idx, train_idx = order[:n_val], order[n_val:]
        X_tr, y_tr = X[train_idx], y[train_idx]
        X_val, y_val = X[val_idx], y[val_idx]

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
                logp = self.log_density_t(ad.Tensor(X_tr[idx]), y_tr[idx])
                loss = ad.mul(ad.tmean(logp), -1.0)
                ad.backward(loss)
                opt.step()
            self.epochs_run_ = epoch + 1
            if (epoch + 1) % self.val_every and epoch + 1 < self.max_epochs:
                continue
            if n_val:
                monitor = float(-self.log_density(X_val, y_val).mean())
            else:
                monitor = float(-self.log_density(X_tr, y_tr).mean())
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
        self.val_nll_ = best if n_val else None
        self.train_mean_log_density_ = float(self.log_density(X_tr, y_tr).mean())
        return self


def train_flow(X, y, **config):
    return ConditionalAffineFlow(**config).fit(X, y)


def density_threshold(flow, X_train, y_train, target_class):
    """First quartile of log p(x | y') over training rows of the target class.

    Linear-interpolation quantile, held in log-density space.
    """
    X_train = as_float_matrix(X_train)
    y_train = as_label_vector(y_train, X_train.shape[0])
    rows = X_train[y_train == target_class]
    if rows.shape[0] == 0:
        raise DataError(
            f"target class {target_class} absent from the training data"
        )
    logd = flow.log_density(rows, target_class)
    return float(np.quantile(logd, 0.25))
