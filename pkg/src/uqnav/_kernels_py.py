"""Pure-numpy dense-layer kernels (reference backend).

Same call signatures as the compiled backend in _kernels.pyx.  All arrays
are float64 and C-contiguous; shape checks live one level up in uqnav.nn.
Activation codes: 0 = relu, 1 = tanh, 2 = identity.
"""

import numpy as np

NAME = "python"


def affine(x, w, b):
    # y[i, o] = sum_k x[i, k] * w[o, k] + b[o]
    return x @ w.T + b


def activate(s, code):
    if code == 0:
        return np.maximum(s, 0.0)
    if code == 1:
        return np.tanh(s)
    if code == 2:
        return s.copy()
    raise ValueError(f"unknown activation code {code}")


def activation_grad(a, da, code):
    # Derivatives expressed through the layer output a, not the pre-activation.
    if code == 0:
        return np.where(a > 0.0, da, 0.0)
    if code == 1:
        return da * (1.0 - a * a)
    if code == 2:
        return da.copy()
    raise ValueError(f"unknown activation code {code}")


def affine_grad_params(ds, x):
    return ds.T @ x, ds.sum(axis=0)


def affine_grad_input(ds, w):
    return ds @ w
