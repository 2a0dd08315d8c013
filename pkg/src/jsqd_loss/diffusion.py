"""Gaussian fluctuation statistics around the mean-field.

The sqrt(N)-scaled deviation of the occupancy tails converges to an
Ornstein-Uhlenbeck process with drift matrix H(pi), constant forcing
-w3(pi) and noise intensities V_i = 2*i*(pi_i - pi_{i+1}).  This module
computes its stationary mean ``kappa`` and covariance ``Sigma`` (by linear
and Lyapunov solves) and the transient first and second moments along an
arbitrary mean-field trajectory.

Sign convention: ``kappa`` is the actual stationary mean of the centered
process, i.e. the solution of H(pi) kappa = w3(pi).  For beta > 0 (reduced
load) every component is <= 0: the occupancy sits slightly below the
fixed point.
"""

from dataclasses import dataclass
import json

import numpy as np
import scipy.linalg

from .model import ModelParams, as_occupancy_tail, build_H, drift, w1, w2, w3
from .meanfield import FixedPoint, IntegrationInstabilityError, default_dt


@dataclass(frozen=True)
class OUStationaryStats:
    """Stationary mean (length C+1, component 0 = 0), covariance (C x C) and noise intensities."""

    kappa: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class OUMomentTrajectory:
    """First and second transient moments on a shared time grid."""

    times: np.ndarray
    mean: np.ndarray  # (K, C+1), component 0 identically 0
    cov: np.ndarray  # (K, C, C)


def eigen_diagnostics(H: np.ndarray) -> tuple[float, np.ndarray]:
    """Eigenvalues of the drift matrix and the maximum real part."""
    eig = np.linalg.eigvals(np.asarray(H, dtype=float))
    return float(np.max(eig.real)), eig


def noise_intensities(pi: np.ndarray) -> np.ndarray:
    """V_i = 2*i*(pi_i - pi_{i+1}) with V_0 = 0 and pi_{C+1} = 0."""
    pi = np.asarray(pi, dtype=float)
    C = pi.shape[0] - 1
    pi_ext = np.concatenate([pi, [0.0]])
    V = np.zeros(C + 1)
    n = np.arange(1, C + 1)
    V[1:] = 2.0 * n * (pi_ext[1:-1] - pi_ext[2:])
    return V


def _require_hurwitz(H: np.ndarray) -> None:
    max_re, _ = eigen_diagnostics(H)
    if max_re >= 0:
        raise ArithmeticError(
            "drift matrix is not Hurwitz (max eigenvalue real part %g)" % max_re
        )


def stationary_kappa(fp: FixedPoint, params: ModelParams) -> np.ndarray:
    """Stationary mean of the fluctuation process: solves H(pi) kappa = w3(pi).

    Equals -integral_0^inf exp(H s) w3(pi) ds since H(pi) is Hurwitz.
    """
    H = build_H(fp.pi, params)
    _require_hurwitz(H)
    rhs = w3(fp.pi, params)[1:]
    kappa = np.zeros(params.C + 1)
    kappa[1:] = np.linalg.solve(H, rhs)
    return kappa


def stationary_covariance(fp: FixedPoint, params: ModelParams) -> np.ndarray:
    """Stationary covariance: solves H Sigma + Sigma H^T + diag(V) = 0.

    The Lyapunov equation is solved as a dense linear system in the C^2
    unknowns; C is small so this is cheap and dependency-free.
    """
    H = build_H(fp.pi, params)
    _require_hurwitz(H)
    C = params.C
    V = noise_intensities(fp.pi)
    I = np.eye(C)
    A = np.kron(I, H) + np.kron(H, I)  # acts on vec(Sigma), H symmetric-free form
    rhs = -np.diag(V[1:]).reshape(-1)
    Sigma = np.linalg.solve(A, rhs).reshape(C, C)
    return 0.5 * (Sigma + Sigma.T)


def ou_stationary_stats(fp: FixedPoint, params: ModelParams) -> OUStationaryStats:
    return OUStationaryStats(
        kappa=stationary_kappa(fp, params),
        Sigma=stationary_covariance(fp, params),
        V=noise_intensities(fp.pi),
    )


def matrix_exponential_apply(H: np.ndarray, t: float, v: np.ndarray) -> np.ndarray:
    """exp(H t) @ v via scipy's scaling-and-squaring matrix exponential."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return scipy.linalg.expm(np.asarray(H, dtype=float) * t) @ np.asarray(v, dtype=float)


def transient_ou_moments(
    u0,
    m0,
    S0,
    params: ModelParams,
    t_end: float,
    dt: float | None = None,
) -> OUMomentTrajectory:
    """Co-integrate the mean-field with the OU moment ODEs on a shared RK4 grid.

    x' = drift(x);  m' = H(x) m - w3(x);  S' = H(x) S + S H(x)^T + diag(w1(x) + w2(x)).
    """
    if dt is None:
        dt = default_dt(params)
    C = params.C
    x = as_occupancy_tail(u0, C)
    m = np.asarray(m0, dtype=float)[1:].copy() if len(m0) == C + 1 else np.asarray(m0, dtype=float).copy()
    S = np.asarray(S0, dtype=float).copy()
    if S.shape != (C, C):
        raise ValueError("S0 must be C x C")
    nsteps = max(1, int(np.ceil(t_end / dt - 1e-9))) if t_end > 0 else 0
    h = t_end / nsteps if nsteps else dt
    times = np.linspace(0.0, t_end, nsteps + 1)
    means = np.zeros((nsteps + 1, C + 1))
    covs = np.empty((nsteps + 1, C, C))
    means[0, 1:] = m
    covs[0] = S

    def rhs(x, m, S):
        H = build_H(x, params)
        noise = (w1(x, params) + w2(x))[1:]
        dm = H @ m - w3(x, params)[1:]
        dS = H @ S + S @ H.T + np.diag(noise)
        return drift(x, params), dm, dS

    for k in range(nsteps):
        kx1, km1, kS1 = rhs(x, m, S)
        kx2, km2, kS2 = rhs(x + 0.5 * h * kx1, m + 0.5 * h * km1, S + 0.5 * h * kS1)
        kx3, km3, kS3 = rhs(x + 0.5 * h * kx2, m + 0.5 * h * km2, S + 0.5 * h * kS2)
        kx4, km4, kS4 = rhs(x + h * kx3, m + h * km3, S + h * kS3)
        x = x + (h / 6.0) * (kx1 + 2 * kx2 + 2 * kx3 + kx4)
        m = m + (h / 6.0) * (km1 + 2 * km2 + 2 * km3 + km4)
        S = S + (h / 6.0) * (kS1 + 2 * kS2 + 2 * kS3 + kS4)
        try:
            x = as_occupancy_tail(x, C)
        except ValueError as exc:
            raise IntegrationInstabilityError(
                "mean-field state left U at t=%g (try a smaller dt)" % ((k + 1) * h)
            ) from exc
        S = 0.5 * (S + S.T)
        means[k + 1, 1:] = m
        covs[k + 1] = S
        min_eig = float(np.min(np.linalg.eigvalsh(S)))
        if min_eig < -1e-10:
            raise IntegrationInstabilityError(
                "covariance lost positive semidefiniteness at t=%g (min eig %g)"
                % ((k + 1) * h, min_eig)
            )
    return OUMomentTrajectory(times=times, mean=means, cov=covs)


def stats_to_json(stats: OUStationaryStats, H: np.ndarray) -> str:
    """JSON export of kappa, Sigma, spectrum and noise intensities."""
    _, eig = eigen_diagnostics(H)
    payload = {
        "kappa": stats.kappa.tolist(),
        "sigma": stats.Sigma.tolist(),
        "eigenvalues_real": eig.real.tolist(),
        "eigenvalues_imag": eig.imag.tolist(),
        "V": stats.V.tolist(),
    }
    return json.dumps(payload, indent=2, sort_keys=True)
