"""Adam parameter updates.

Defaults: lr = 0.001, beta1 = 0.999, beta2 = 0.99. Note the reverse of
the conventional beta ordering; CONVENTIONAL_BETAS restores (0.9, 0.999)
for runs that want the textbook configuration.
"""

import copy

import numpy as np

from .tensors import ShapeMismatchError

DEFAULT_BETAS = (0.999, 0.99)
CONVENTIONAL_BETAS = (0.9, 0.999)


class AdamState:
    """First/second moment estimates for one model replica."""

    def __init__(self, model, lr=0.001, betas=DEFAULT_BETAS, eps=1e-8):
        beta1, beta2 = betas
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError(f"betas must lie in [0, 1), got {betas}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}
        for layer in model.conv_layers():
            for pname, arr in layer.params().items():
                key = f"{layer.name}.{pname}"
                self.m[key] = np.zeros_like(arr)
                self.v[key] = np.zeros_like(arr)

    def clone(self):
        return copy.deepcopy(self)


def adam_step(state, model, grads):
    """One Adam update, in place on the model parameters.

    grads maps layer name -> {"kernel": g, "bias": g} as produced by
    model_backward.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for layer in model.conv_layers():
        layer_grads = grads[layer.name]
        for pname, p in layer.params().items():
            key = f"{layer.name}.{pname}"
            g = layer_grads[pname]
            if g.shape != p.shape:
                raise ShapeMismatchError(g.shape, p.shape)
            m = state.m[key]
            v = state.v[key]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
