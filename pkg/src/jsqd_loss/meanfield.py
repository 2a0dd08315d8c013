"""Mean-field ODE integration and fixed-point computation.

The occupancy ODE u' = drift(u) is integrated with fixed-step classical RK4
so trajectories are reproducible bit-for-bit for a given step size.  The
fixed point is obtained by iterating the composition of the rate map
(probability vector -> state-dependent arrival rates) with the birth-death
stationary-distribution map.
"""

from dataclasses import dataclass
import io

import numpy as np

from .model import ModelParams, U_TOL, as_occupancy_tail, drift


class IntegrationInstabilityError(RuntimeError):
    """RK4 step left the tail space beyond tolerance; use a smaller dt."""


class FixedPointConvergenceError(RuntimeError):
    """Fixed-point iteration did not converge within max_iter."""


@dataclass(frozen=True)
class Trajectory:
    """Mean-field solution on a uniform time grid; states[k] is a tail vector."""

    times: np.ndarray
    states: np.ndarray

    def to_csv(self) -> str:
        """CSV with columns t, u1, ..., uC (u0 is identically 1 and omitted)."""
        C = self.states.shape[1] - 1
        buf = io.StringIO()
        buf.write("t," + ",".join("u%d" % n for n in range(1, C + 1)) + "\n")
        for t, u in zip(self.times, self.states):
            buf.write(
                ",".join("%.17g" % v for v in (t, *u[1:])) + "\n"
            )
        return buf.getvalue()


@dataclass(frozen=True)
class FixedPoint:
    """Fixed point of the mean-field: tail vector, occupancy-dependent rates, residual."""

    pi: np.ndarray
    lambda_hat: np.ndarray
    residual: float


def default_dt(params: ModelParams) -> float:
    return 1e-3 * min(1.0, 1.0 / params.sigma, 1.0 / params.C)


def integrate_mean_field(
    u0, params: ModelParams, t_end: float, dt: float | None = None
) -> Trajectory:
    """Integrate u' = drift(u) from u0 over {0, dt, ..., t_end} with classical RK4."""
    if dt is None:
        dt = default_dt(params)
    if dt <= 0 or t_end < 0:
        raise ValueError("dt must be positive and t_end nonnegative")
    u = as_occupancy_tail(u0, params.C)
    nsteps = max(1, int(np.ceil(t_end / dt - 1e-9))) if t_end > 0 else 0
    h = t_end / nsteps if nsteps else dt
    times = np.linspace(0.0, t_end, nsteps + 1)
    states = np.empty((nsteps + 1, params.C + 1))
    states[0] = u
    for k in range(nsteps):
        k1 = drift(u, params)
        k2 = drift(u + 0.5 * h * k1, params)
        k3 = drift(u + 0.5 * h * k2, params)
        k4 = drift(u + h * k3, params)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        try:
            u = as_occupancy_tail(u, params.C)
        except ValueError as exc:
            raise IntegrationInstabilityError(
                "state left U at t=%g: %s (try a smaller dt)" % ((k + 1) * h, exc)
            ) from exc
        states[k + 1] = u
    return Trajectory(times=times, states=states)


def theta_map(p, params: ModelParams) -> np.ndarray:
    """Occupancy-dependent arrival rates induced by occupancy distribution ``p``.

    Component n is sigma * (t_n^d - t_{n+1}^d) / (t_n - t_{n+1}) with
    t_n = sum_{j>=n} p_j.  Degenerate denominators (p_n ~ 0) take the
    analytic limit sigma * d * t_{n+1}^(d-1).
    """
    p = np.asarray(p, dtype=float)
    C = p.shape[0] - 1
    sigma, d = params.sigma, params.d
    if d == 1:
        return np.full(C + 1, sigma)
    tails = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
    r = np.empty(C + 1)
    for n in range(C + 1):
        if p[n] > 1e-12:
            r[n] = sigma * (tails[n] ** d - tails[n + 1] ** d) / p[n]
        else:
            r[n] = sigma * d * tails[n + 1] ** (d - 1)
    return r


def xi_hat_map(r) -> np.ndarray:
    """Stationary distribution of the birth-death chain with birth rates r, death rates n."""
    r = np.asarray(r, dtype=float)
    C = r.shape[0] - 1
    a = np.empty(C + 1)
    a[0] = 1.0
    for n in range(1, C + 1):
        a[n] = a[n - 1] * r[n - 1] / n
    return a / a.sum()


def _balance_residual(pi: np.ndarray, params: ModelParams) -> float:
    pi_ext = np.concatenate([pi, [0.0]])
    n = np.arange(1, params.C + 1)
    lhs = params.sigma * (pi_ext[:-2] ** params.d - pi_ext[1:-1] ** params.d)
    rhs = n * (pi_ext[1:-1] - pi_ext[2:])
    return float(np.max(np.abs(lhs - rhs)))


def fixed_point(
    params: ModelParams, tol: float = 1e-12, max_iter: int = 100000
) -> FixedPoint:
    """Compute the unique mean-field fixed point by iterating the composed map.

    Starts from the uniform occupancy distribution; a damping factor of 0.5 is
    engaged automatically if the iteration fails to improve for 50 steps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    C = params.C
    p = np.full(C + 1, 1.0 / (C + 1))
    damping = 1.0
    best_diff = np.inf
    stalled = 0
    diff = np.inf
    for _ in range(max_iter):
        p_new = xi_hat_map(theta_map(p, params))
        diff = float(np.max(np.abs(p_new - p)))
        p = damping * p_new + (1.0 - damping) * p
        if diff < best_diff:
            best_diff = diff
            stalled = 0
        else:
            stalled += 1
            if stalled >= 50:
                damping = 0.5
        if diff < tol:
            break
    else:
        raise FixedPointConvergenceError(
            "no convergence in %d iterations (last step %g)" % (max_iter, diff)
        )
    pi = np.concatenate([np.cumsum(p[::-1])[::-1]])
    pi[0] = 1.0
    pi = as_occupancy_tail(pi, C)
    residual = _balance_residual(pi, params)
    if residual > 10.0 * tol:
        raise FixedPointConvergenceError(
            "balance residual %g exceeds 10*tol after convergence" % residual
        )
    lam_hat = theta_map(p, params)[:C]
    return FixedPoint(pi=pi, lambda_hat=lam_hat, residual=residual)
