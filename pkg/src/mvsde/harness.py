"""Experiment harness: strong-error and propagation-of-chaos sweeps, rate fits,
density and phase-mean exports.

All sweeps drive every cell from one shared noise plan, so runs at different
step sizes (or particle counts) see the same Brownian paths and the same
initial positions; the proxy-true solution is computed by the same scheme at
the finest step (or largest system).  Diverged cells are kept as rows with
``error = inf`` and a flag, not dropped.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError, FitError
from .models import ModelSpec
from .newton import NewtonConfig
from .noise import NoisePlan
from .schemes import SchemeParams, SimResult, simulate

PREASYMPTOTIC_GUARD = 10.0


@dataclass
class ErrorRow:
    parameter: float
    error: float
    n_samples: int
    diverged: bool = False
    runtime_s: float = 0.0


@dataclass
class ErrorTable:
    metric: str  # strong_rmse | strong_path | poc
    rows: list = field(default_factory=list)
    fitted_slope: float = float("nan")
    fit_intercept: float = float("nan")
    r_squared: float = float("nan")
    excluded: list = field(default_factory=list)
    newton_stats: dict = field(default_factory=dict)

    def usable_rows(self):
        return [r for r in self.rows
                if not r.diverged and np.isfinite(r.error) and r.error > 0]


def fit_rate(table: ErrorTable):
    """OLS of log(error) on log(parameter) over usable rows; needs >= 3."""
    rows = [r for r in table.usable_rows() if r.parameter not in table.excluded]
    if len(rows) < 3:
        raise FitError(f"only {len(rows)} usable rows, need >= 3 for a rate fit")
    x = np.log(np.array([r.parameter for r in rows]))
    y = np.log(np.array([r.error for r in rows]))
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def _finalise_fit(table: ErrorTable):
    """Fit the table, applying the pre-asymptotic guard on the largest parameter."""
    try:
        slope, intercept, r2 = fit_rate(table)
    except FitError:
        return table
    usable = sorted(table.usable_rows(), key=lambda r: r.parameter)
    if len(usable) >= 4:
        head, largest = usable[:-1], usable[-1]
        x = np.log(np.array([r.parameter for r in head]))
        y = np.log(np.array([r.error for r in head]))
        s, c = np.polyfit(x, y, 1)
        predicted = np.exp(s * np.log(largest.parameter) + c)
        if largest.error > PREASYMPTOTIC_GUARD * predicted:
            table.excluded.append(largest.parameter)
            slope, intercept, r2 = fit_rate(table)
    table.fitted_slope = slope
    table.fit_intercept = intercept
    table.r_squared = r2
    return table


def _particle_rmse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=-1))))


def _run_cells(cells, fn, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def _prewarm(plan: NoisePlan, n: int):
    for i in range(n):
        plan._stream(i)


def _sim(m, plan, scheme, h, n, T, seed, x0, record, newton_cfg, alpha):
    M = int(round(T / h))
    if abs(M * h - T) > 1e-9 * T:
        raise ConfigurationError(f"step size {h} does not divide horizon T={T}")
    p = SchemeParams(T=T, M=M, N=n, scheme=scheme, seed=seed, taming_alpha=alpha)
    return simulate(m, p, plan, x0=x0, record=record, newton_cfg=newton_cfg)


def strong_error(m: ModelSpec, scheme: str, h_list, h_proxy: float, N: int,
                 T: float, seed: int, x0=((0.0, 1.0),),
                 newton_cfg: NewtonConfig | None = None,
                 taming_alpha: Optional[float] = None,
                 threads: int = 1, path: bool = False) -> ErrorTable:
    """Terminal (or path, with ``path=True``) strong error vs step size.

    The proxy-true solution uses the same scheme at ``h_proxy`` with coupled
    noise; errors are root mean squares over the particle batch.
    """
    h_list = sorted(float(h) for h in h_list)
    if not h_list or h_proxy > min(h_list):
        raise ConfigurationError("h_proxy must not exceed the smallest h in h_list")
    m_fine = int(round(T / h_proxy))
    if abs(m_fine * h_proxy - T) > 1e-9 * T:
        raise ConfigurationError(f"h_proxy={h_proxy} does not divide horizon T={T}")
    plan = NoisePlan(seed, N, m.l, h_proxy, m_fine)
    for h in h_list:
        plan.factor_for(h)  # validates divisibility up front
    _prewarm(plan, N)

    record = "full_path" if path else "terminal"
    proxy = _sim(m, plan, scheme, h_proxy, N, T, seed, x0, record, newton_cfg, taming_alpha)

    def cell(h):
        t0 = time.perf_counter()
        run = _sim(m, plan, scheme, h, N, T, seed, x0, record, newton_cfg, taming_alpha)
        dt = time.perf_counter() - t0
        if run.diverged or proxy.diverged:
            return ErrorRow(h, float("inf"), N, True, dt), run
        if path:
            factor = plan.factor_for(h) // plan.factor_for(h_proxy)
            prox_on_grid = proxy.path[::factor]
            sup = np.max(np.sum((prox_on_grid - run.path) ** 2, axis=-1), axis=0)
            err = float(np.sqrt(np.mean(sup)))
        else:
            err = _particle_rmse(proxy.terminal, run.terminal)
        return ErrorRow(h, err, N, False, dt), run

    results = _run_cells(h_list, cell, threads)
    table = ErrorTable(metric="strong_path" if path else "strong_rmse")
    all_iters = list(proxy.newton_iterations)
    for row, run in results:
        table.rows.append(row)
        all_iters.extend(run.newton_iterations)
    if all_iters:
        table.newton_stats = {
            "solves": len(all_iters),
            "median_iterations": float(np.median(all_iters)),
            "max_iterations": int(np.max(all_iters)),
        }
    return _finalise_fit(table)


def path_strong_error(m: ModelSpec, scheme: str, h_list, h_proxy: float, N: int,
                      T: float, seed: int, **kw) -> ErrorTable:
    """Strong error with the per-particle sup over the coarse grid's times."""
    return strong_error(m, scheme, h_list, h_proxy, N, T, seed, path=True, **kw)


def poc_error(m: ModelSpec, scheme: str, N_list, N_proxy: int, h: float,
              T: float, seed: int, x0=((0.0, 1.0),),
              newton_cfg: NewtonConfig | None = None,
              taming_alpha: Optional[float] = None,
              threads: int = 1) -> ErrorTable:
    """Propagation-of-chaos error vs particle count against one large proxy system.

    Every system of size ``N_l`` uses noise streams and initial positions
    ``0..N_l-1`` of the shared plan; particle ``j`` is compared with particle
    ``j`` of the proxy system.
    """
    N_list = sorted(int(n) for n in N_list)
    if not N_list or max(N_list) > N_proxy:
        raise ConfigurationError("every N in N_list must be <= N_proxy")
    M = int(round(T / h))
    if abs(M * h - T) > 1e-9 * T:
        raise ConfigurationError(f"step size {h} does not divide horizon T={T}")
    plan = NoisePlan(seed, N_proxy, m.l, h, M)
    _prewarm(plan, N_proxy)

    proxy = _sim(m, plan, scheme, h, N_proxy, T, seed, x0, "terminal", newton_cfg, taming_alpha)

    def cell(n_l):
        t0 = time.perf_counter()
        run = _sim(m, plan, scheme, h, n_l, T, seed, x0, "terminal", newton_cfg, taming_alpha)
        dt = time.perf_counter() - t0
        if run.diverged or proxy.diverged:
            return ErrorRow(n_l, float("inf"), n_l, True, dt)
        err = _particle_rmse(proxy.terminal[:n_l], run.terminal)
        return ErrorRow(n_l, err, n_l, False, dt)

    table = ErrorTable(metric="poc")
    table.rows = _run_cells(N_list, cell, threads)
    return _finalise_fit(table)


@dataclass
class DensityTable:
    times: list            # requested times
    edges: list            # per time: list of per-coordinate bin edge arrays
    masses: list           # per time: list of per-coordinate mass arrays


def export_density(m: ModelSpec, scheme: str, p: SchemeParams, plan: NoisePlan,
                   times, bins: int = 50, x0=((0.0, 1.0),),
                   newton_cfg: NewtonConfig | None = None) -> DensityTable:
    """Normalised per-coordinate histograms of the cloud at requested grid times."""
    h = p.h
    idx = []
    for t in times:
        k = int(round(t / h))
        if not (0 <= k <= p.M) or abs(k * h - t) > 1e-9 * max(t, 1.0):
            raise ConfigurationError(f"time {t} is not on the simulation grid")
        idx.append(k)
    run = simulate(m, replace(p, scheme=scheme), plan, x0=x0, record="full_path",
                   newton_cfg=newton_cfg)
    if run.diverged:
        raise ConfigurationError(
            f"run diverged at step {run.failed_step}; no density to export"
        )
    out = DensityTable(times=list(times), edges=[], masses=[])
    for k in idx:
        cloud = run.path[k]
        e_t, m_t = [], []
        for c in range(m.d):
            counts, edges = np.histogram(cloud[:, c], bins=bins)
            e_t.append(edges)
            m_t.append(counts / cloud.shape[0])
        out.edges.append(e_t)
        out.masses.append(m_t)
    return out


def export_phase_means(m: ModelSpec, scheme: str, p: SchemeParams, plan: NoisePlan,
                       x0=((0.0, 1.0),), newton_cfg: NewtonConfig | None = None):
    """Cross-particle mean of each coordinate at every grid time; requires d = 2.

    Returns ``(times, means)`` with ``means`` of shape (M+1, 2).
    """
    if m.d != 2:
        raise ConfigurationError(f"phase means require d=2, model has d={m.d}")
    run = simulate(m, replace(p, scheme=scheme), plan, x0=x0, record="full_path",
                   newton_cfg=newton_cfg)
    if run.diverged:
        raise ConfigurationError(
            f"run diverged at step {run.failed_step}; no phase means to export"
        )
    return run.times, np.mean(run.path, axis=1)
