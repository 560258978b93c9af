"""Composite Simpson helpers on uniform grids."""

import numpy as np
from scipy import integrate


def simpson_weights(n, h):
    """Weights of composite Simpson on ``n`` uniform nodes (``n`` odd)."""
    if n < 3 or n % 2 == 0:
        raise ValueError(f"Simpson needs an odd node count >= 3, got {n}")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def richardson_weights(n, h):
    """Simpson on ``h`` and ``2h`` combined as ``(16 S_h - S_2h)/15`` (Boole's rule).

    Falls back to plain Simpson unless ``n - 1`` is a multiple of 4.
    """
    if (n - 1) % 4:
        return simpson_weights(n, h)
    w = 16.0 * simpson_weights(n, h)
    w[::2] -= simpson_weights((n - 1) // 2 + 1, 2 * h)
    return w / 15.0


def trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def cumulative(f, h, axis=-1):
    """Running integral from the first node, same shape as ``f``."""
    f = np.asarray(f, dtype=float)
    if f.shape[axis] < 3:
        return integrate.cumulative_trapezoid(f, dx=h, axis=axis, initial=0.0)
    return integrate.cumulative_simpson(f, dx=h, axis=axis, initial=0.0)


def reverse_cumulative(f, h, axis=-1):
    """Integral from each node to the last node, without cancellation."""
    f = np.flip(np.asarray(f, dtype=float), axis=axis)
    return np.flip(cumulative(f, h, axis=axis), axis=axis)


def simpson_richardson(func, a, b, n):
    """Simpson value on ``n`` intervals and |S(h) - S(2h)|/15 error estimate."""
    if n % 4:
        n += 4 - n % 4
    x = np.linspace(a, b, n + 1)
    fx = func(x)
    h = (b - a) / n
    fine = np.dot(simpson_weights(n + 1, h), fx)
    coarse = np.dot(simpson_weights(n // 2 + 1, 2 * h), fx[::2])
    return fine, abs(fine - coarse) / 15.0
