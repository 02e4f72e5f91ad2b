import numpy as np


class Adagrad:
    """Per-parameter learning rates from accumulated squared gradients."""

    def __init__(self, params: dict, lr: float = 0.01, eps: float = 1e-10):
        self.params = params
        self.lr = lr
        self.eps = eps
        self.accum = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict):
        for k, g in grads.items():
            if g is None:
                continue
            self.accum[k] += g * g
            self.params[k] -= self.lr * g / (np.sqrt(self.accum[k]) + self.eps)
