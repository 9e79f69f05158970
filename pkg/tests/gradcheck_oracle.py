"""Finite-difference gradient oracle.

twin_loss re-implements the train-mode forward pass and mean cross-entropy
with explicit loops, independently of the package code, so the check
validates both the forward math and the analytic backward pass. The driver
sweeps every coordinate of every parameter tensor with central differences.
"""

import numpy as np
from numba import njit

BN_EPS = 1e-5


@njit(cache=True)
def twin_loss(x, y, W1, b1, g1, be1, W2, b2, g2, be2, W3, b3, Wh, bh):
    B = x.shape[0]

    a1 = x @ W1
    h1 = np.empty_like(a1)
    for j in range(a1.shape[1]):
        mean = 0.0
        for i in range(B):
            a1[i, j] += b1[j]
            mean += a1[i, j]
        mean /= B
        var = 0.0
        for i in range(B):
            var += (a1[i, j] - mean) ** 2
        var /= B
        inv = 1.0 / np.sqrt(var + BN_EPS)
        for i in range(B):
            u = g1[j] * (a1[i, j] - mean) * inv + be1[j]
            h1[i, j] = u if u > 0.0 else 0.0

    a2 = h1 @ W2
    h2 = np.empty_like(a2)
    for j in range(a2.shape[1]):
        mean = 0.0
        for i in range(B):
            a2[i, j] += b2[j]
            mean += a2[i, j]
        mean /= B
        var = 0.0
        for i in range(B):
            var += (a2[i, j] - mean) ** 2
        var /= B
        inv = 1.0 / np.sqrt(var + BN_EPS)
        for i in range(B):
            u = g2[j] * (a2[i, j] - mean) * inv + be2[j]
            h2[i, j] = u if u > 0.0 else 0.0

    a3 = h2 @ W3
    h3 = np.empty_like(a3)
    for i in range(B):
        for j in range(a3.shape[1]):
            h3[i, j] = h2[i, j] + a3[i, j] + b3[j]

    logits = h3 @ Wh
    loss = 0.0
    for i in range(B):
        l0 = logits[i, 0] + bh[0]
        l1 = logits[i, 1] + bh[1]
        mx = l0 if l0 > l1 else l1
        lse = mx + np.log(np.exp(l0 - mx) + np.exp(l1 - mx))
        loss += lse - (l0 if y[i] == 0 else l1)
    return loss / B


@njit(cache=True)
def _fd_tensor(flat, grad_flat, h, floor, x, y, W1, b1, g1, be1, W2, b2, g2, be2, W3, b3, Wh, bh):
    worst = 0.0
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        lp = twin_loss(x, y, W1, b1, g1, be1, W2, b2, g2, be2, W3, b3, Wh, bh)
        flat[k] = orig - h
        lm = twin_loss(x, y, W1, b1, g1, be1, W2, b2, g2, be2, W3, b3, Wh, bh)
        flat[k] = orig
        fd = (lp - lm) / (2.0 * h)
        denom = max(abs(fd), abs(grad_flat[k]), floor)
        rel = abs(fd - grad_flat[k]) / denom
        if rel > worst:
            worst = rel
    return worst


# weight-bearing tensors in the order twin_loss takes them; running stats are
# state, not parameters, and do not enter the train-mode loss
CHECKED_KEYS = (
    "fc1_w", "fc1_b", "bn1_gamma", "bn1_beta",
    "fc2_w", "fc2_b", "bn2_gamma", "bn2_beta",
    "fc3_w", "fc3_b", "head_w", "head_b",
)


def max_relative_error(params, grads, x, y, h=1e-5, floor=1e-6):
    """Worst relative FD error over every coordinate of every tensor.

    floor bounds the denominator: below it, gradients are indistinguishable
    from finite-difference roundoff and relative error loses meaning.
    """
    y = np.asarray(y, dtype=np.int64)
    args = tuple(getattr(params, k) for k in CHECKED_KEYS)
    twin = twin_loss(x, y, *args)
    worst = 0.0
    per_tensor = {}
    for key in CHECKED_KEYS:
        arr = getattr(params, key)
        rel = _fd_tensor(arr.reshape(-1), grads[key].reshape(-1), h, floor, x, y, *args)
        per_tensor[key] = rel
        worst = max(worst, rel)
    return worst, per_tensor, twin
