"""Core model: parameters, state spaces, drift operators and their linearization.

State conventions used throughout the package:

* an occupancy tail is a length C+1 float array ``u`` with ``u[0] == 1`` and
  ``u[0] >= u[1] >= ... >= u[C] >= 0`` (the space U); ``u[C+1]`` is implicitly 0.
* a fluctuation vector is a length C+1 float array ``r`` with ``r[0] == 0``
  (the space V).
* drift matrices act on components 1..C only, so they are C x C.
"""

from dataclasses import dataclass
import math

import numpy as np

#: tolerance for floating-point membership in U; violations within this
#: tolerance are clamped, larger ones are errors.
U_TOL = 1e-12


class InvalidParametersError(ValueError):
    """Raised when a model parameter set is inconsistent."""


@dataclass(frozen=True)
class ModelParams:
    """System parameters (N servers, capacity C, d choices, rate sigma - beta/sqrt(N))."""

    N: int
    C: int
    d: int
    sigma: float
    beta: float = 0.0

    def __post_init__(self):
        if self.N < 1 or self.C < 1 or self.d < 1:
            raise InvalidParametersError(
                "N, C and d must all be >= 1 (got N=%r, C=%r, d=%r)"
                % (self.N, self.C, self.d)
            )
        if self.sigma <= 0:
            raise InvalidParametersError("sigma must be positive (got %r)" % (self.sigma,))
        if self.sigma - self.beta / math.sqrt(self.N) <= 0:
            raise InvalidParametersError(
                "per-server arrival rate sigma - beta/sqrt(N) = %g is not positive"
                % (self.sigma - self.beta / math.sqrt(self.N))
            )


def arrival_rate(params: ModelParams) -> float:
    """Per-server arrival rate sigma - beta/sqrt(N)."""
    return params.sigma - params.beta / math.sqrt(params.N)


def as_occupancy_tail(u, C: int | None = None, tol: float = U_TOL) -> np.ndarray:
    """Validate and clamp ``u`` into the space U.

    Monotonicity or range violations within ``tol`` are clamped; anything
    larger raises ValueError.
    """
    u = np.asarray(u, dtype=float).copy()
    if u.ndim != 1:
        raise ValueError("occupancy tail must be a 1-d vector")
    if C is not None and u.shape[0] != C + 1:
        raise ValueError("occupancy tail must have length C+1 = %d" % (C + 1))
    if abs(u[0] - 1.0) > tol:
        raise ValueError("u[0] must equal 1 (got %r)" % (u[0],))
    u[0] = 1.0
    for n in range(1, u.shape[0]):
        if u[n] > u[n - 1] + tol or u[n] < -tol:
            raise ValueError(
                "tail vector leaves U at index %d beyond tolerance %g" % (n, tol)
            )
        u[n] = min(u[n], u[n - 1])
        u[n] = max(u[n], 0.0)
    return u


def w1(u: np.ndarray, params: ModelParams) -> np.ndarray:
    """Arrival-flow operator: component n is sigma * (u_{n-1}^d - u_n^d), component 0 is 0."""
    ud = np.asarray(u, dtype=float) ** params.d
    out = np.zeros_like(ud)
    out[1:] = params.sigma * (ud[:-1] - ud[1:])
    return out


def w2(u: np.ndarray) -> np.ndarray:
    """Departure-flow operator: component n is n * (u_n - u_{n+1}) with u_{C+1} = 0."""
    u = np.asarray(u, dtype=float)
    C = u.shape[0] - 1
    out = np.zeros_like(u)
    n = np.arange(1, C + 1)
    out[1:C] = n[:-1] * (u[1:C] - u[2:])
    out[C] = C * u[C]
    return out


def w3(u: np.ndarray, params: ModelParams) -> np.ndarray:
    """Rate-perturbation operator: component n is beta * (u_{n-1}^d - u_n^d)."""
    ud = np.asarray(u, dtype=float) ** params.d
    out = np.zeros_like(ud)
    out[1:] = params.beta * (ud[:-1] - ud[1:])
    return out


def drift(u: np.ndarray, params: ModelParams) -> np.ndarray:
    """Right-hand side of the occupancy ODE: w1(u) - w2(u)."""
    return w1(u, params) - w2(u)


def build_H(a: np.ndarray, params: ModelParams) -> np.ndarray:
    """Tridiagonal linearization of the drift at ``a``, acting on components 1..C.

    Sub-diagonal gamma_i = sigma * d * a_i^(d-1), diagonal -(gamma_i + i),
    super-diagonal i.  For d=1 the convention 0^0 = 1 makes gamma_i = sigma.
    """
    a = np.asarray(a, dtype=float)
    C = a.shape[0] - 1
    sigma, d = params.sigma, params.d
    if d == 1:
        gamma = np.full(C, sigma)
    else:
        gamma = sigma * d * a[1 : C + 1] ** (d - 1)
    H = np.zeros((C, C))
    idx = np.arange(C)
    H[idx, idx] = -(gamma + idx + 1)
    if C > 1:
        H[idx[:-1], idx[:-1] + 1] = idx[:-1] + 1
        H[idx[1:], idx[1:] - 1] = gamma[:-1]
    return H


def drift_lipschitz_bound(params: ModelParams) -> float:
    """Lipschitz constant 2*d*sqrt(sigma^2 + C^2) of the drift on U."""
    return 2.0 * params.d * math.sqrt(params.sigma**2 + params.C**2)


def h_norm_bound(params: ModelParams) -> float:
    """Uniform operator-norm bound sqrt(32*(sigma^2*d^2 + C^2)) on the linearization."""
    return math.sqrt(32.0 * (params.sigma**2 * params.d**2 + params.C**2))
