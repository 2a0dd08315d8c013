"""Closed-form baselines and the first-order blocking correction.

Erlang-B and its Halfin-Whitt limit give the classical reference points; the
first-order approximation combines the fixed point with the stationary OU
mean to predict the finite-N blocking probability up to o(1/sqrt(N)).
"""

from dataclasses import dataclass
import io
import math

import numpy as np

from .model import ModelParams
from .meanfield import FixedPoint


@dataclass(frozen=True)
class BlockingReport:
    """Asymptotic blocking, first-order correction and its term breakdown."""

    pi_C_d: float
    first_order: float
    N: int
    kappa_term: float
    beta_term: float
    simulated: float | None = None
    simulated_ci_halfwidth: float | None = None


def erlang_b(alpha: float, n: int) -> float:
    """Blocking probability of M/M/n/n with offered load alpha (stable recursion)."""
    if alpha <= 0 or n < 1:
        raise ValueError("require alpha > 0 and n >= 1")
    B = 1.0
    for k in range(1, n + 1):
        B = alpha * B / (k + alpha * B)
    return B


def halfin_whitt_limit(beta: float, C: int) -> float:
    """phi(beta) / (sqrt(C) * Phi(beta)), the heavy-traffic limit of sqrt(N)*Er(N lam, NC)."""
    phi = math.exp(-0.5 * beta * beta) / math.sqrt(2.0 * math.pi)
    Phi = 0.5 * math.erfc(-beta / math.sqrt(2.0))
    return phi / (math.sqrt(C) * Phi)


def blocking_approximation(
    fp: FixedPoint, kappa: np.ndarray, params: ModelParams
) -> BlockingReport:
    """First-order blocking estimate pi_C^d - kappa_term - beta_term.

    kappa_term = sum_i i*(kappa_i - kappa_{i+1}) / (sigma*sqrt(N)), which
    telescopes to sum_{i>=1} kappa_i / (sigma*sqrt(N)); beta_term =
    beta*(1 - pi_C^d) / (sigma*sqrt(N)).  With kappa the stationary mean of
    the fluctuation process (negative components for beta > 0) this matches
    the exact Erlang-B perturbation in the d=1 case.
    """
    sqrtN = math.sqrt(params.N)
    pi_C_d = float(fp.pi[params.C] ** params.d)
    kappa_term = float(np.sum(kappa[1:])) / (params.sigma * sqrtN)
    beta_term = params.beta * (1.0 - pi_C_d) / (params.sigma * sqrtN)
    return BlockingReport(
        pi_C_d=pi_C_d,
        first_order=pi_C_d - kappa_term - beta_term,
        N=params.N,
        kappa_term=kappa_term,
        beta_term=beta_term,
    )


#: column order of the error-scaling table (also the CSV header)
SCALING_COLUMNS = (
    "N",
    "simulated",
    "pi_C_d",
    "first_order",
    "sqrtN_sim_minus_piCd",
    "theoretical_constant",
    "sqrtN_sim_minus_first_order",
)


def error_scaling_experiment(
    params_template: ModelParams,
    N_list,
    seed: int = 0,
    warmup: float | None = None,
    horizon: float = 1000.0,
    replications: int = 10,
) -> list[dict]:
    """Blocking error vs N: one row per N with simulation and theory columns.

    The theoretical constant is the limit of sqrt(N)*(P_block - pi_C^d),
    i.e. -sum_i kappa_i / sigma - beta*(1 - pi_C^d) / sigma.
    """
    from .meanfield import fixed_point
    from .diffusion import stationary_kappa
    from .simulator import SimConfig, estimate_blocking

    if list(N_list) != sorted(N_list):
        raise ValueError("N_list must be increasing")
    rows = []
    for N in N_list:
        params = ModelParams(
            N=int(N),
            C=params_template.C,
            d=params_template.d,
            sigma=params_template.sigma,
            beta=params_template.beta,
        )
        fp = fixed_point(params)
        kappa = stationary_kappa(fp, params)
        report = blocking_approximation(fp, kappa, params)
        outcome = estimate_blocking(
            SimConfig(
                params=params,
                seed=seed,
                warmup=warmup,
                horizon=horizon,
                replications=replications,
            )
        )
        sqrtN = math.sqrt(N)
        constant = (
            -float(np.sum(kappa[1:])) / params.sigma
            - params.beta * (1.0 - report.pi_C_d) / params.sigma
        )
        rows.append(
            {
                "N": int(N),
                "simulated": outcome.blocking_estimate,
                "pi_C_d": report.pi_C_d,
                "first_order": report.first_order,
                "sqrtN_sim_minus_piCd": sqrtN * (outcome.blocking_estimate - report.pi_C_d),
                "theoretical_constant": constant,
                "sqrtN_sim_minus_first_order": sqrtN
                * (outcome.blocking_estimate - report.first_order),
                "ci_halfwidth": outcome.blocking_ci_halfwidth,
            }
        )
    return rows


def scaling_rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(",".join(SCALING_COLUMNS) + "\n")
    for row in rows:
        cells = []
        for col in SCALING_COLUMNS:
            v = row[col]
            cells.append("%d" % v if col == "N" else "%.17g" % v)
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()
