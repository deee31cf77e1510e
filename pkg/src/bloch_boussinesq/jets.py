"""Truncated Taylor series in time ("jets").

A jet of order J is an array whose leading axis holds the normalized Taylor
coefficients ``F_n = d^n F / dt^n / n!`` for ``n = 0..J``.  Levels beyond J are
treated as zero, so a shift such as the second time derivative loses the top
two levels.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = ["cauchy", "dt2", "derivative_value", "taylor_ode", "rescale", "evaluate"]


def cauchy(a: np.ndarray, b: np.ndarray, mul: Callable = np.multiply) -> np.ndarray:
    """Jet of the product, using ``mul`` for the pointwise product of levels."""
    order = a.shape[0] - 1
    first = mul(a[0], b[0])
    out = np.zeros((order + 1,) + np.shape(first), dtype=np.result_type(first, a, b))
    for n in range(order + 1):
        acc = first if n == 0 else 0
        if n:
            for i in range(n + 1):
                acc = acc + mul(a[i], b[n - i])
        out[n] = acc
    return out


def dt2(a: np.ndarray) -> np.ndarray:
    """Jet of the second time derivative (top two levels become zero)."""
    out = np.zeros_like(a)
    order = a.shape[0] - 1
    for n in range(order - 1):
        out[n] = (n + 1) * (n + 2) * a[n + 2]
    return out


def derivative_value(a: np.ndarray, k: int) -> np.ndarray:
    """Value of the k-th time derivative at the expansion point."""
    return float(np.prod(np.arange(1, k + 1))) * a[k]


def taylor_ode(y0, rhs: Callable, order: int):
    """Taylor coefficients of the solution of ``y' = rhs(y)``.

    ``y0`` is a tuple of arrays (the state); ``rhs`` maps a tuple of jets with
    ``n + 1`` levels to a tuple of jets, and only level ``n`` of its result is
    used at step ``n``.  Returns a tuple of jets with ``order + 1`` levels.
    """
    jets = [np.zeros((order + 1,) + np.shape(y), dtype=np.result_type(y, float)) for y in y0]
    for jet, y in zip(jets, y0):
        jet[0] = y
    for n in range(order):
        partial = tuple(jet[:n + 1] for jet in jets)
        f = rhs(partial)
        for jet, fj in zip(jets, f):
            jet[n + 1] = fj[n] / (n + 1)
    return tuple(jets)


def rescale(a: np.ndarray, factor: float) -> np.ndarray:
    """Jet in ``t`` from a jet in ``T = factor * t``."""
    powers = factor ** np.arange(a.shape[0])
    return a * powers.reshape((-1,) + (1,) * (a.ndim - 1))


def evaluate(a: np.ndarray, s: float) -> np.ndarray:
    """Sum of the series at offset ``s``."""
    out = np.zeros_like(a[0])
    for n in range(a.shape[0] - 1, -1, -1):
        out = out * s + a[n]
    return out
