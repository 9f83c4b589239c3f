"""Newton solve of the implicit stage F(y) = y - x - h V(y) = 0 over R^{Nd}.

The Jacobian has the closed form ``I - h A + (h/N) Gamma`` with ``A`` block
diagonal (``grad_u(y_i) + (1/N) sum_j grad_f(y_i - y_j)``) and ``Gamma`` the
full block matrix of ``grad_f(y_i - y_j)``.  Iteration starts from ``y0 = x``
and stops when the iterate difference drops below ``sqrt(h)`` in the max norm
(or a configured absolute tolerance).  On non-convergence the solver falls
back to damped Newton once, then to fixed-point sweeps, then raises; the stop
rule is never weakened along the ladder.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DivergenceError, SolverError
from .interaction import drift_V
from .models import ModelSpec, max_stepsize

JACOBIAN_MODES = ("full", "drop_gamma", "finite_difference")


@dataclass(frozen=True)
class NewtonConfig:
    tol_mode: str = "paper_sqrt_h"  # or "absolute"
    abs_tol: float = 1e-10
    max_iter: int = 25
    jacobian_mode: str = "full"
    damping: float = 1.0
    enforce_stepsize: bool = True

    def __post_init__(self):
        if self.tol_mode not in ("paper_sqrt_h", "absolute"):
            raise ConfigurationError(f"unknown tol_mode {self.tol_mode!r}")
        if self.jacobian_mode not in JACOBIAN_MODES:
            raise ConfigurationError(f"unknown jacobian_mode {self.jacobian_mode!r}")
        if self.abs_tol <= 0:
            raise ConfigurationError("abs_tol must be > 0")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if not 0 < self.damping <= 1:
            raise ConfigurationError("damping must be in (0, 1]")


@dataclass
class NewtonReport:
    iterations: int
    final_step_inf_norm: float
    final_residual_inf_norm: float
    jacobian_mode_used: str
    converged: bool
    fallback: str = "none"  # none | damped | fixed_point


def assemble_jacobian(Y: np.ndarray, h: float, m: ModelSpec, mode: str = "full") -> np.ndarray:
    """Dense (Nd x Nd) Jacobian of F at Y in the requested mode."""
    Y = np.asarray(Y, dtype=float)
    n, d = Y.shape
    nd = n * d
    if mode in ("full", "drop_gamma"):
        if m.grad_f is None or m.grad_u is None:
            raise ConfigurationError(
                f"model {m.name!r} lacks analytic gradients required by mode {mode!r}"
            )
        diff = Y[:, None, :] - Y[None, :, :]
        G = np.asarray(m.grad_f(diff))          # (N, N, d, d)
        A = np.asarray(m.grad_u(Y)) + np.sum(G, axis=1) / n
        if mode == "full":
            J = (h / n) * G.transpose(0, 2, 1, 3).copy()
        else:
            J = np.zeros((n, d, n, d))
        idx = np.arange(n)
        J[idx, :, idx, :] -= h * A
        J = J.reshape(nd, nd)
        J[np.diag_indices(nd)] += 1.0
        return J
    if mode == "finite_difference":
        flat = Y.reshape(nd)
        step = max(1e-7, 1e-7 * np.max(np.abs(flat), initial=0.0))
        base = _F(flat, flat * 0.0, h, m, n, d)  # x cancels in the difference
        J = np.empty((nd, nd))
        for j in range(nd):
            pert = flat.copy()
            pert[j] += step
            J[:, j] = (_F(pert, flat * 0.0, h, m, n, d) - base) / step
        return J
    raise ConfigurationError(f"unknown jacobian mode {mode!r}")


def _F(y_flat: np.ndarray, x_flat: np.ndarray, h: float, m: ModelSpec, n: int, d: int) -> np.ndarray:
    y = y_flat.reshape(n, d)
    return y_flat - x_flat - h * drift_V(y, m).reshape(n * d)


def _newton_attempt(X: np.ndarray, h: float, m: ModelSpec, cfg: NewtonConfig,
                    tol: float, damping: float):
    n, d = X.shape
    nd = n * d
    x_flat = X.reshape(nd)
    y = x_flat.copy()
    diff = math.inf
    for it in range(1, cfg.max_iter + 1):
        res = _F(y, x_flat, h, m, n, d)
        if cfg.jacobian_mode == "drop_gamma" and m.grad_f is not None and m.grad_u is not None:
            step = _solve_block_diag(y.reshape(n, d), h, m, res)
        else:
            J = assemble_jacobian(y.reshape(n, d), h, m, cfg.jacobian_mode)
            step = scipy.linalg.solve(J, res)
        y_next = y - damping * step
        diff = float(np.max(np.abs(y_next - y)))
        y = y_next
        if diff < tol:
            return y.reshape(n, d), it, diff, True
    return y.reshape(n, d), cfg.max_iter, diff, False


def _solve_block_diag(Y: np.ndarray, h: float, m: ModelSpec, res: np.ndarray) -> np.ndarray:
    """Solve (I - hA) step = res blockwise, A the diagonal blocks of grad V."""
    n, d = Y.shape
    diff = Y[:, None, :] - Y[None, :, :]
    G = np.asarray(m.grad_f(diff))
    A = np.asarray(m.grad_u(Y)) + np.sum(G, axis=1) / n
    blocks = np.eye(d) - h * A                   # (N, d, d)
    return np.linalg.solve(blocks, res.reshape(n, d, 1)).reshape(n * d)


def solve_implicit(X: np.ndarray, h: float, m: ModelSpec,
                   cfg: NewtonConfig | None = None):
    """Solve Y = X + h V(Y); returns ``(Y, NewtonReport)``.

    Fallback ladder on non-convergence: one damped restart (halved damping),
    then fixed-point iteration ``y <- X + h V(y)`` up to 200 sweeps, then
    :class:`SolverError` carrying the report.
    """
    cfg = cfg or NewtonConfig()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigurationError("X must have shape (N, d)")
    if not np.all(np.isfinite(X)):
        raise DivergenceError("non-finite state passed to implicit solver")
    h_max = max_stepsize(m.constants)
    if not 0 < h < h_max:
        if cfg.enforce_stepsize:
            raise ConfigurationError(
                f"step size h={h} outside the admissible interval (0, {h_max})"
            )
        warnings.warn(f"step size h={h} outside the admissible interval (0, {h_max})")

    tol = math.sqrt(h) if cfg.tol_mode == "paper_sqrt_h" else cfg.abs_tol

    attempts = [("none", cfg.damping), ("damped", cfg.damping * 0.5)]
    last = None
    for fallback, damping in attempts:
        try:
            Y, iters, diff, ok = _newton_attempt(X, h, m, cfg, tol, damping)
        except DivergenceError:
            ok, Y, iters, diff = False, None, cfg.max_iter, math.inf
        if ok:
            resid = float(np.max(np.abs(Y - X - h * drift_V(Y, m))))
            return Y, NewtonReport(iters, diff, resid, cfg.jacobian_mode, True, fallback)
        last = (iters, diff)

    # fixed-point sweeps
    y = X.copy()
    diff = math.inf
    for sweep in range(1, 201):
        try:
            y_next = X + h * drift_V(y, m)
        except DivergenceError:
            break
        diff = float(np.max(np.abs(y_next - y)))
        y = y_next
        if diff < tol:
            resid = float(np.max(np.abs(y - X - h * drift_V(y, m))))
            return y, NewtonReport(sweep, diff, resid, cfg.jacobian_mode, True, "fixed_point")

    report = NewtonReport(last[0] if last else 0, last[1] if last else math.inf,
                          math.inf, cfg.jacobian_mode, False, "fixed_point")
    raise SolverError(
        f"implicit stage failed to converge (h={h}, tol={tol:g})", report=report
    )
