"""Mean-field convolution drift over the full particle cloud.

The drift of particle ``i`` is ``v_i = (1/N) sum_j f(Y_i - Y_j) + u(Y_i, cloud)``;
the ``j = i`` term contributes ``f(0) = 0`` and is kept in the sum.  The stacked
map ``V`` evaluates all rows in one O(N^2) pairwise pass with a fixed
ascending-``j`` summation order, so results are bit-reproducible regardless of
how callers chunk the outer index.
"""

from __future__ import annotations

import numpy as np

from .errors import DivergenceError
from .models import ModelSpec


def pairwise_convolution(Y: np.ndarray, m: ModelSpec) -> np.ndarray:
    """Convolution part ``(1/N) sum_j f(Y_i - Y_j)`` for every particle, (N, d)."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    diff = Y[:, None, :] - Y[None, :, :]
    return np.sum(m.f(diff), axis=1) / n


def pairwise_convolution_symmetric(Y: np.ndarray, m: ModelSpec) -> np.ndarray:
    """Factor-2 saving using oddness of ``f``; not bit-exact vs the default pass."""
    Y = np.asarray(Y, dtype=float)
    n, d = Y.shape
    iu, ju = np.triu_indices(n, k=1)
    fu = np.asarray(m.f(Y[iu] - Y[ju]))
    acc = np.zeros((n, d))
    np.add.at(acc, iu, fu)
    np.add.at(acc, ju, -fu)
    return acc / n


def drift_v(i: int, Y: np.ndarray, m: ModelSpec) -> np.ndarray:
    """Mean-field drift of particle ``i`` (0-based index), a d-vector."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"particle index {i} out of range for N={n}")
    conv = np.sum(m.f(Y[i] - Y), axis=0) / n
    out = conv + np.asarray(m.u(Y[i], Y))
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite drift for particle {i}", particle=i)
    return out


def drift_V(Y: np.ndarray, m: ModelSpec, symmetric: bool = False) -> np.ndarray:
    """Stacked system drift, row ``i`` equal to ``drift_v(i, Y, m)``, (N, d)."""
    Y = np.asarray(Y, dtype=float)
    conv = (pairwise_convolution_symmetric if symmetric else pairwise_convolution)(Y, m)
    out = conv + np.asarray(m.u(Y, Y))
    if not np.all(np.isfinite(out)):
        bad = int(np.argwhere(~np.all(np.isfinite(out), axis=-1))[0, 0])
        raise DivergenceError(f"non-finite drift for particle {bad}", particle=bad)
    return out
