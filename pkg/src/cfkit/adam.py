"""Full-batch Adam over autodiff leaf tensors."""

import numpy as np

from .exceptions import NumericError


def adam_step(param, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update; returns (new_param, new_m, new_v).

    ``t`` is the 1-based step count used for bias correction. Deterministic
    given identical inputs.
    """
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, m, v


class Adam:
    """Adam optimizer bound to a list of requires_grad leaf tensors."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            if not np.isfinite(p.grad).all():
                raise NumericError("non-finite gradient in Adam step")
            p.data, self._m[i], self._v[i] = adam_step(
                p.data, p.grad, self._m[i], self._v[i], self.t,
                self.lr, self.beta1, self.beta2, self.eps,
            )

    def state_copy(self):
        return [p.data.copy() for p in self.params]

    def load(self, state):
        for p, s in zip(self.params, state):
            p.data = s.copy()
