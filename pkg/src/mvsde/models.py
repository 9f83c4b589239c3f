"""Model definitions: coefficient interfaces, built-in examples, and the step-size rule.

Coefficient calling conventions (all vectorised over leading axes):

* ``f(z)``        : ``(..., d) -> (..., d)``   pairwise interaction kernel, odd, ``f(0) = 0``
* ``u(x, cloud)`` : ``((..., d), (N, d)) -> (..., d)``   self-interaction drift
* ``b(t, x, cloud)``     : ``(..., d) -> (..., d)``      Lipschitz drift
* ``sigma(t, x, cloud)`` : ``(..., d) -> (..., d, l)``   Lipschitz diffusion
* ``grad_f(z)``, ``grad_u(x)`` : ``(..., d) -> (..., d, d)``  optional Jacobians

The measure argument is always represented by the full particle cloud.
All callables must be pure; ``ModelSpec`` instances are immutable and safe
to share across threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError

BUILTIN_NAMES = ("granular_media", "double_well", "van_der_pol")


@dataclass(frozen=True)
class ModelConstants:
    """Regularity constants declared for a model's coefficients.

    ``L_f`` and ``L_u`` are one-sided Lipschitz constants (space), ``L_u_tilde``
    the Lipschitz constant of ``u`` in the measure, ``q`` the polynomial growth
    exponent and ``C_u = |u(0, delta_0)|^2``.
    """

    L_f: float
    L_u: float
    L_u_tilde: float = 0.0
    q: float = 1.0
    C_u: float = 0.0

    def __post_init__(self):
        if self.L_u_tilde < 0:
            raise ConfigurationError("L_u_tilde must be >= 0")
        if self.q <= 0:
            raise ConfigurationError("q must be > 0")
        if self.C_u < 0:
            raise ConfigurationError("C_u must be >= 0")

    @property
    def L_f_plus(self) -> float:
        return max(self.L_f, 0.0)


@dataclass(frozen=True)
class ModelSpec:
    """Coefficient functions plus declared regularity constants."""

    name: str
    d: int
    l: int
    f: Callable
    u: Callable
    b: Callable
    sigma: Callable
    constants: ModelConstants
    sigma_constant_flag: bool = False
    grad_f: Optional[Callable] = None
    grad_u: Optional[Callable] = None

    def __post_init__(self):
        if self.d < 1 or self.l < 1:
            raise ConfigurationError("dimensions d and l must be positive")


def compute_zeta(c: ModelConstants) -> float:
    """Step-size constant zeta = max{2(L_f+L_u), 4 L_f^+ + 2 L_u + 2 L_u~ + 1, 0}."""
    return max(
        2.0 * (c.L_f + c.L_u),
        4.0 * c.L_f_plus + 2.0 * c.L_u + 2.0 * c.L_u_tilde + 1.0,
        0.0,
    )


def max_stepsize(c: ModelConstants) -> float:
    """Upper end of the admissible step-size interval; use h strictly below it."""
    zeta = compute_zeta(c)
    if zeta > 0.0:
        return min(1.0, 1.0 / zeta)
    return 1.0


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------


def _granular() -> ModelSpec:
    sqrt2 = math.sqrt(2.0)

    def f(z):
        z = np.asarray(z, dtype=float)
        return -np.sign(z) * z * z

    def u(x, cloud):
        return np.zeros_like(np.asarray(x, dtype=float))

    def b(t, x, cloud):
        return np.zeros_like(np.asarray(x, dtype=float))

    def sigma(t, x, cloud):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (1,))
        out[..., 0, 0] = sqrt2
        return out

    def grad_f(z):
        z = np.asarray(z, dtype=float)
        # f'(z) = -2|z|, continuous; value 0 at z = 0 (kernel kink)
        return (-2.0 * np.abs(z))[..., None]

    def grad_u(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (1,))

    return ModelSpec(
        name="granular_media", d=1, l=1, f=f, u=u, b=b, sigma=sigma,
        constants=ModelConstants(L_f=0.0, L_u=0.0, L_u_tilde=0.0, q=1.0, C_u=0.0),
        sigma_constant_flag=True, grad_f=grad_f, grad_u=grad_u,
    )


def _double_well() -> ModelSpec:
    def f(z):
        z = np.asarray(z, dtype=float)
        return -z * z * z  # products, not np.power: keeps f exactly odd

    def u(x, cloud):
        x = np.asarray(x, dtype=float)
        return -0.25 * x * x * x

    def b(t, x, cloud):
        return np.asarray(x, dtype=float)

    def sigma(t, x, cloud):
        x = np.asarray(x, dtype=float)
        return x[..., None]

    def grad_f(z):
        z = np.asarray(z, dtype=float)
        return (-3.0 * z * z)[..., None]

    def grad_u(x):
        x = np.asarray(x, dtype=float)
        return (-0.75 * x * x)[..., None]

    return ModelSpec(
        name="double_well", d=1, l=1, f=f, u=u, b=b, sigma=sigma,
        constants=ModelConstants(L_f=0.0, L_u=0.0, L_u_tilde=0.0, q=2.0, C_u=0.0),
        sigma_constant_flag=False, grad_f=grad_f, grad_u=grad_u,
    )


def _van_der_pol() -> ModelSpec:
    def f(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        return -x * r2

    def u(x, cloud):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        x1 = x[..., 0]
        out[..., 0] = -4.0 / 3.0 * x1 * x1 * x1
        return out

    def b(t, x, cloud):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        out[..., 0] = 4.0 * (x[..., 0] - x[..., 1])
        out[..., 1] = 0.25 * x[..., 0]
        return out

    def sigma(t, x, cloud):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = x[..., 0]
        out[..., 1, 1] = x[..., 1]
        return out

    def grad_f(x):
        # d/dx (-x |x|^2) = -(|x|^2 I + 2 x x^T)
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        eye = np.eye(2)
        return -(r2[..., None, None] * eye + 2.0 * x[..., :, None] * x[..., None, :])

    def grad_u(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = -4.0 * x[..., 0] ** 2
        return out

    return ModelSpec(
        name="van_der_pol", d=2, l=2, f=f, u=u, b=b, sigma=sigma,
        constants=ModelConstants(L_f=0.0, L_u=0.0, L_u_tilde=0.0, q=2.0, C_u=0.0),
        sigma_constant_flag=False, grad_f=grad_f, grad_u=grad_u,
    )


_BUILTIN_FACTORIES = {
    "granular_media": _granular,
    "double_well": _double_well,
    "van_der_pol": _van_der_pol,
}

_REGISTRY: dict = {}


def make_builtin(name: str) -> ModelSpec:
    """Return one of the built-in example models by name."""
    try:
        return _BUILTIN_FACTORIES[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown built-in model {name!r}; choose one of {BUILTIN_NAMES}"
        ) from None


def register_model(name: str, spec: ModelSpec) -> None:
    """Register a user model for lookup by name (library API only)."""
    if name in _BUILTIN_FACTORIES:
        raise ConfigurationError(f"cannot shadow built-in model {name!r}")
    _REGISTRY[name] = spec


def get_model(name: str) -> ModelSpec:
    if name in _BUILTIN_FACTORIES:
        return _BUILTIN_FACTORIES[name]()
    if name in _REGISTRY:
        return _REGISTRY[name]
    raise ConfigurationError(f"unknown model {name!r}")


def linear_shift(m: ModelSpec, theta: float, gamma: float) -> ModelSpec:
    """Move linear rate between the monotone drifts and the Lipschitz drift.

    Returns a model with ``f^(x) = f(x) - theta x``,
    ``u^(x, mu) = u(x, mu) - gamma x - theta mean(mu)`` and
    ``b^(t, x, mu) = b(t, x, mu) + (gamma + theta) x``; the total drift is
    pointwise unchanged while the one-sided constants shift by the subtracted
    rates.  The Lipschitz constant of ``b`` grows by ``|gamma + theta|``
    (noted, not stored).
    """
    if theta == 0.0 and gamma == 0.0:
        return m

    f0, u0, b0 = m.f, m.u, m.b
    gf0, gu0 = m.grad_f, m.grad_u
    eye = np.eye(m.d)

    def f(z):
        z = np.asarray(z, dtype=float)
        return f0(z) - theta * z

    def u(x, cloud):
        x = np.asarray(x, dtype=float)
        shift = theta * np.mean(np.asarray(cloud, dtype=float), axis=0)
        return u0(x, cloud) - gamma * x - shift

    def b(t, x, cloud):
        x = np.asarray(x, dtype=float)
        return b0(t, x, cloud) + (gamma + theta) * x

    grad_f = None
    if gf0 is not None:
        def grad_f(z):
            return gf0(z) - theta * eye

    grad_u = None
    if gu0 is not None:
        # derivative w.r.t. the space argument only; the theta*mean(cloud)
        # term is treated as frozen (approximate Jacobian, stop rule unchanged)
        def grad_u(x):
            return gu0(x) - gamma * eye

    c = m.constants
    constants = replace(
        c,
        L_f=c.L_f - theta,
        L_u=c.L_u - gamma,
        L_u_tilde=c.L_u_tilde + abs(theta),
    )
    return replace(
        m,
        name=f"{m.name}+shift({theta},{gamma})",
        f=f, u=u, b=b, grad_f=grad_f, grad_u=grad_u,
        constants=constants,
    )


def spot_check(m: ModelSpec, n_samples: int = 200, seed: int = 0,
               scale: float = 3.0, warn: bool = True) -> list:
    """Sampling-based sanity checks of a model's declared structure.

    Checks oddness and normalisation of ``f``, the declared one-sided
    Lipschitz constant of ``f`` on samples, and ``grad_f``/``grad_u`` against
    central finite differences.  Returns a list of warning strings (and emits
    them through :mod:`warnings` unless ``warn=False``); constants cannot be
    certified from black-box evaluations, so nothing is rejected here.
    """
    rng = np.random.default_rng(seed)
    issues = []
    d = m.d

    z0 = np.zeros(d)
    if not np.allclose(np.asarray(m.f(z0)), 0.0, atol=1e-12):
        issues.append("f(0) != 0 (normalisation violated)")

    xs = rng.normal(scale=scale, size=(n_samples, d))
    if not np.allclose(m.f(-xs), -np.asarray(m.f(xs)), atol=1e-9):
        issues.append("f is not odd on sampled points")

    ys = rng.normal(scale=scale, size=(n_samples, d))
    dx = xs - ys
    df = np.asarray(m.f(xs)) - np.asarray(m.f(ys))
    lhs = np.sum(dx * df, axis=-1)
    rhs = m.constants.L_f * np.sum(dx * dx, axis=-1)
    if np.any(lhs > rhs + 1e-9):
        issues.append("sampled one-sided Lipschitz bound of f exceeds declared L_f")

    if m.grad_f is not None:
        bad = _grad_mismatch(m.f, m.grad_f, xs, d)
        if bad:
            issues.append("grad_f does not match central finite differences")
    if m.grad_u is not None:
        cloud = xs
        bad = _grad_mismatch(lambda x: m.u(x, cloud), m.grad_u, xs, d)
        if bad:
            issues.append("grad_u does not match central finite differences")

    if warn:
        for msg in issues:
            warnings.warn(f"model {m.name!r}: {msg}")
    return issues


def _grad_mismatch(fn, grad, xs, d, step=1e-5, rtol=1e-6, atol=1e-6):
    g = np.asarray(grad(xs))
    fd = np.empty_like(g)
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        fd[..., j] = (np.asarray(fn(xs + e)) - np.asarray(fn(xs - e))) / (2 * step)
    scale = np.maximum(np.abs(g), 1.0)
    return not np.all(np.abs(fd - g) <= atol + rtol * scale)
