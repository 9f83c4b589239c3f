"""Reproducible Brownian increments with exact refinement/coarsening.

One fine-grid sample path drives every step size and every scheme.  Increments
are addressed by ``(seed, particle, step)`` through a counter-based generator
(Philox keyed per particle), so a run over ``N < N_max`` particles sees streams
``0..N-1`` unchanged and sweep cells can be generated in any order.  The
uniform-to-Gaussian conversion is a fixed inverse-CDF map so outputs are
identical across platforms.

Coarse increments are always ascending sums of fine increments; a coarsened
view composes factors and keeps summing from the fine grid, which makes
iterated and direct coarsening identical bit-for-bit.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError

_STREAM_INCREMENTS = 1
_STREAM_INITIAL = 2

_U64 = np.uint64
_INV_2_53 = 2.0 ** -53


class NoisePlan:
    """Seeded fine-grid Brownian increments for up to ``n_max`` particles."""

    def __init__(self, seed: int, n_max: int, l: int, h_fine: float, m_fine: int):
        if n_max < 1 or l < 1 or m_fine < 1:
            raise ConfigurationError("n_max, l and m_fine must be positive")
        if h_fine <= 0:
            raise ConfigurationError("h_fine must be positive")
        self.seed = int(seed)
        self.n_max = int(n_max)
        self.l = int(l)
        self.h_fine = float(h_fine)
        self.m_fine = int(m_fine)
        self._sqrt_h = math.sqrt(self.h_fine)
        self._cache: dict[int, np.ndarray] = {}

    # -- raw stream addressing ------------------------------------------------

    def _gaussians(self, particle: int, stream: int, count: int) -> np.ndarray:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, particle], dtype=_U64)
        counter = np.array([0, 0, 0, stream], dtype=_U64)
        gen = np.random.Generator(np.random.Philox(counter=counter, key=key))
        raw = gen.integers(0, 1 << 53, size=count, dtype=np.int64)
        u = (raw + 0.5) * _INV_2_53  # open interval (0, 1)
        return ndtri(u)

    def _stream(self, particle: int) -> np.ndarray:
        """Fine increments of one particle, shape (m_fine, l), cached."""
        arr = self._cache.get(particle)
        if arr is None:
            z = self._gaussians(particle, _STREAM_INCREMENTS, self.m_fine * self.l)
            arr = (z * self._sqrt_h).reshape(self.m_fine, self.l)
            arr.setflags(write=False)
            self._cache[particle] = arr
        return arr

    # -- public API -----------------------------------------------------------

    def fine_increments(self, i: int, k: int) -> np.ndarray:
        """Increment of particle ``i`` over fine step ``k``, an l-vector."""
        if not 0 <= i < self.n_max:
            raise ConfigurationError(f"particle index {i} out of range (N_max={self.n_max})")
        if not 0 <= k < self.m_fine:
            raise ConfigurationError(f"fine step index {k} out of range (M_fine={self.m_fine})")
        return self._stream(i)[k]

    def coarsen(self, factor: int, i: int, n: int) -> np.ndarray:
        """Sum of ``factor`` consecutive fine increments, ascending order."""
        factor = int(factor)
        if factor < 1 or self.m_fine % factor != 0:
            raise ConfigurationError(
                f"coarsening factor {factor} does not divide M_fine={self.m_fine}"
            )
        m_coarse = self.m_fine // factor
        if not 0 <= n < m_coarse:
            raise ConfigurationError(f"coarse step index {n} out of range")
        rows = self._stream(i)
        acc = rows[n * factor].copy()
        for k in range(n * factor + 1, (n + 1) * factor):
            acc += rows[k]
        return acc

    def coarse_view(self, factor: int) -> "CoarseNoise":
        return CoarseNoise(self, factor)

    def factor_for(self, h: float) -> int:
        """Coarsening factor for step size ``h``; rejects non-multiples of h_fine."""
        ratio = h / self.h_fine
        factor = int(round(ratio))
        if factor < 1 or abs(factor - ratio) > 1e-9 * max(ratio, 1.0):
            raise ConfigurationError(
                f"step size {h} is not an integer multiple of h_fine={self.h_fine}"
            )
        return factor

    def increments_matrix(self, n_particles: int, factor: int,
                          n_steps: int | None = None) -> np.ndarray:
        """Coarse increments for particles ``0..n_particles-1``, (M_coarse, N, l).

        Elementwise identical to :meth:`coarsen` (same ascending adds).
        """
        if not 1 <= n_particles <= self.n_max:
            raise ConfigurationError(f"n_particles {n_particles} out of range (N_max={self.n_max})")
        factor = int(factor)
        if factor < 1 or self.m_fine % factor != 0:
            raise ConfigurationError(
                f"coarsening factor {factor} does not divide M_fine={self.m_fine}"
            )
        m_coarse = self.m_fine // factor
        if n_steps is None:
            n_steps = m_coarse
        if n_steps > m_coarse:
            raise ConfigurationError("requested more coarse steps than the plan covers")
        stacked = np.stack([self._stream(i)[: n_steps * factor] for i in range(n_particles)])
        blocks = stacked.reshape(n_particles, n_steps, factor, self.l)
        acc = blocks[:, :, 0].copy()
        for k in range(1, factor):
            acc += blocks[:, :, k]
        return np.ascontiguousarray(acc.transpose(1, 0, 2))

    def initial_positions(self, n_particles: int, d: int, dist) -> np.ndarray:
        """I.i.d. per-coordinate normal initial positions, (N, d).

        ``dist`` is a sequence of ``(mean, var)`` pairs, one per coordinate (a
        single pair broadcasts).  Drawn from a dedicated per-particle stream so
        particle ``j`` starts identically in systems of any size.
        """
        if not 1 <= n_particles <= self.n_max:
            raise ConfigurationError(f"n_particles {n_particles} out of range (N_max={self.n_max})")
        dist = list(dist)
        if len(dist) == 1 and d > 1:
            dist = dist * d
        if len(dist) != d:
            raise ConfigurationError(
                f"initial distribution has {len(dist)} coordinates, model has d={d}"
            )
        means = np.array([m for m, _ in dist], dtype=float)
        stds = np.sqrt(np.array([v for _, v in dist], dtype=float))
        out = np.empty((n_particles, d))
        for i in range(n_particles):
            z = self._gaussians(i, _STREAM_INITIAL, d)
            out[i] = means + stds * z
        return out


class CoarseNoise:
    """View of a plan at a coarser grid; sums are always taken from the fine grid."""

    def __init__(self, plan: NoisePlan, factor: int):
        factor = int(factor)
        if factor < 1 or plan.m_fine % factor != 0:
            raise ConfigurationError(
                f"coarsening factor {factor} does not divide M_fine={plan.m_fine}"
            )
        self.plan = plan
        self.factor = factor
        self.h = plan.h_fine * factor
        self.m_steps = plan.m_fine // factor

    def increment(self, i: int, n: int) -> np.ndarray:
        return self.plan.coarsen(self.factor, i, n)

    def coarsen(self, factor: int) -> "CoarseNoise":
        return CoarseNoise(self.plan, self.factor * int(factor))
