"""Adam optimizer for Tensor parameters."""

import numpy as np


def adam_step(param, m, v, t, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update in place on param.data; returns updated (m, v).

    t is the 1-based step count used for bias correction.
    """
    if param.grad is None:
        return m, v
    g = param.grad
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.data.dtype)
    return m, v


class Adam:
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
            self._m[i], self._v[i] = adam_step(
                p, self._m[i], self._v[i], self.t,
                lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
