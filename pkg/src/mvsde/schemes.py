"""One-step maps and trajectory simulation: split-step (SSM), tamed Euler, Euler.

The SSM absorbs the whole mean-field drift ``v`` in the implicit stage; the
explicit stage adds only ``b`` and ``sigma``, both evaluated at the implicit
stage output and its cloud.  Taming divides the convolution term and ``u``
separately by ``1 + M^{-alpha} |.|``; plain Euler is kept as the divergence
baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .interaction import drift_V, pairwise_convolution
from .models import ModelSpec, max_stepsize
from .newton import NewtonConfig, NewtonReport, solve_implicit
from .noise import NoisePlan

SCHEMES = ("ssm", "taming", "euler")


@dataclass(frozen=True)
class ParticleState:
    t: float
    positions: np.ndarray  # (N, d)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class SchemeParams:
    T: float
    M: int
    N: int
    scheme: str = "ssm"
    taming_alpha: Optional[float] = None  # None -> 1 for constant sigma, 1/2 otherwise
    seed: int = 0

    def __post_init__(self):
        if self.T <= 0 or self.M < 0 or self.N < 1:
            raise ConfigurationError("require T > 0, M >= 0, N >= 1")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")

    @property
    def h(self) -> float:
        return self.T / self.M


def _apply_sigma(S: np.ndarray, dW: np.ndarray) -> np.ndarray:
    return np.einsum("ndl,nl->nd", S, dW)


def _check_finite(X: np.ndarray, what: str):
    if not np.all(np.isfinite(X)):
        bad = int(np.argwhere(~np.all(np.isfinite(X), axis=-1))[0, 0])
        raise DivergenceError(f"non-finite {what} for particle {bad}", particle=bad)


def ssm_step(state: ParticleState, dW: np.ndarray, m: ModelSpec, p: SchemeParams,
             cfg: NewtonConfig | None = None):
    """One split-step update; returns ``(new_state, NewtonReport)``."""
    h = p.h
    Y, report = solve_implicit(state.positions, h, m, cfg)
    t = state.t
    X1 = Y + np.asarray(m.b(t, Y, Y)) * h + _apply_sigma(np.asarray(m.sigma(t, Y, Y)), dW)
    _check_finite(X1, "SSM update")
    return ParticleState(t + h, X1), report


def taming_alpha_default(m: ModelSpec) -> float:
    return 1.0 if m.sigma_constant_flag else 0.5


def _tame(term: np.ndarray, m_alpha: float) -> np.ndarray:
    norm = np.linalg.norm(term, axis=-1, keepdims=True)
    return term / (1.0 + m_alpha * norm)


def taming_step(state: ParticleState, dW: np.ndarray, m: ModelSpec, p: SchemeParams) -> ParticleState:
    """Tamed Euler update; convolution term and u are tamed separately."""
    h = p.h
    X = state.positions
    t = state.t
    alpha = p.taming_alpha if p.taming_alpha is not None else taming_alpha_default(m)
    m_alpha = float(p.M) ** (-alpha)
    F = pairwise_convolution(X, m)
    U = np.asarray(m.u(X, X))
    drift = _tame(F, m_alpha) + _tame(U, m_alpha) + np.asarray(m.b(t, X, X))
    X1 = X + drift * h + _apply_sigma(np.asarray(m.sigma(t, X, X)), dW)
    _check_finite(X1, "tamed Euler update")
    return ParticleState(t + h, X1)


def euler_step(state: ParticleState, dW: np.ndarray, m: ModelSpec, p: SchemeParams) -> ParticleState:
    """Untamed Euler-Maruyama update (expected to diverge for super-linear models)."""
    h = p.h
    X = state.positions
    t = state.t
    drift = drift_V(X, m) + np.asarray(m.b(t, X, X))
    X1 = X + drift * h + _apply_sigma(np.asarray(m.sigma(t, X, X)), dW)
    _check_finite(X1, "Euler update")
    return ParticleState(t + h, X1)


@dataclass
class SimResult:
    model: str
    scheme: str
    params: SchemeParams
    times: np.ndarray            # recorded grid times
    path: Optional[np.ndarray]   # (len(times), N, d) or None for terminal-only
    terminal: np.ndarray         # (N, d), last finite state reached
    diverged: bool = False
    failed_step: Optional[int] = None
    newton_iterations: list = field(default_factory=list)
    newton_residuals: list = field(default_factory=list)

    @property
    def newton_stats(self) -> dict:
        its = self.newton_iterations
        if not its:
            return {"solves": 0}
        return {
            "solves": len(its),
            "median_iterations": float(np.median(its)),
            "max_iterations": int(np.max(its)),
            "max_residual": float(np.max(self.newton_residuals)),
        }


def simulate(m: ModelSpec, p: SchemeParams, plan: NoisePlan,
             x0=((0.0, 1.0),), record: str = "terminal", thin: int = 1,
             newton_cfg: NewtonConfig | None = None) -> SimResult:
    """Run ``p.M`` steps of the selected scheme from sampled initial positions.

    ``record`` is one of ``terminal``, ``full_path`` or ``thinned`` (every
    ``thin``-th state plus the endpoint).  A step that produces non-finite
    values marks the result as diverged with the failing step index instead of
    raising, so sweeps can report blow-up as data.  Deterministic given
    ``(plan.seed, m, p)``.
    """
    if record not in ("terminal", "full_path", "thinned"):
        raise ConfigurationError(f"unknown record mode {record!r}")
    if record == "thinned" and thin < 1:
        raise ConfigurationError("thin must be >= 1")

    h = p.h if p.M > 0 else plan.h_fine
    factor = plan.factor_for(p.h) if p.M > 0 else 1
    if p.M > 0 and p.M * factor > plan.m_fine:
        raise ConfigurationError(
            f"plan covers {plan.m_fine} fine steps, run needs {p.M * factor}"
        )
    if p.scheme == "ssm":
        h_max = max_stepsize(m.constants)
        if p.M > 0 and not p.h < h_max:
            enforce = newton_cfg.enforce_stepsize if newton_cfg else True
            if enforce:
                raise ConfigurationError(
                    f"SSM step size h={p.h} not below max_stepsize={h_max}"
                )

    X0 = plan.initial_positions(p.N, m.d, x0)
    state = ParticleState(0.0, X0)

    keep = record != "terminal"
    rec_states = [X0]
    rec_times = [0.0]
    iters: list = []
    resids: list = []
    diverged = False
    failed_step = None

    if p.M > 0:
        dWs = plan.increments_matrix(p.N, factor, n_steps=p.M)
    for n in range(p.M):
        try:
            if p.scheme == "ssm":
                state, rep = ssm_step(state, dWs[n], m, p, newton_cfg)
                iters.append(rep.iterations)
                resids.append(rep.final_residual_inf_norm)
            elif p.scheme == "taming":
                state = taming_step(state, dWs[n], m, p)
            else:
                state = euler_step(state, dWs[n], m, p)
        except DivergenceError:
            diverged = True
            failed_step = n
            break
        if keep and (record == "full_path" or (n + 1) % thin == 0 or n == p.M - 1):
            rec_states.append(state.positions)
            rec_times.append(state.t)

    path = np.stack(rec_states) if keep else None
    times = np.asarray(rec_times) if keep else np.array([state.t])
    return SimResult(
        model=m.name, scheme=p.scheme, params=p,
        times=times, path=path, terminal=state.positions,
        diverged=diverged, failed_step=failed_step,
        newton_iterations=iters, newton_residuals=resids,
    )
