"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Statistical criteria use fixed seeds so the suite is reproducible.
"""

import json
import math

import numpy as np

from jsqd_loss.model import ModelParams, build_H, w3
from jsqd_loss.meanfield import fixed_point, integrate_mean_field
from jsqd_loss.diffusion import (
    eigen_diagnostics,
    noise_intensities,
    ou_stationary_stats,
    stationary_covariance,
    stationary_kappa,
    transient_ou_moments,
)
from jsqd_loss.simulator import (
    SimConfig,
    estimate_blocking,
    fluctuation_samples,
    tails_from_counts,
)
from jsqd_loss.analytics import blocking_approximation, erlang_b
from jsqd_loss.cli import cli_main

from test_meanfield import truncated_poisson_tails
from test_diffusion import kappa_quadrature


def report(criterion, ok, detail=""):
    print("criterion %-2s %s %s" % (criterion, "PASS" if ok else "FAIL", detail))
    assert ok, "criterion %s failed: %s" % (criterion, detail)


def test_c01_fixed_point_d1_oracle():
    worst = 0.0
    for sigma in (0.5, 1.0, 2.0):
        for C in (1, 2, 5, 10):
            params = ModelParams(N=100, C=C, d=1, sigma=sigma)
            fp = fixed_point(params)
            worst = max(worst, float(np.abs(fp.pi - truncated_poisson_tails(sigma, C)).max()))
    report(1, worst <= 1e-10, "max |pi - truncated Poisson| = %.3g" % worst)


def test_c02_mean_field_contraction():
    rng = np.random.default_rng(2024)
    worst = -np.inf
    for sigma in (2.0, 5.0):
        params = ModelParams(N=100, C=5, d=2, sigma=sigma)
        fp = fixed_point(params)
        for _ in range(20):
            u0 = np.concatenate([[1.0], np.sort(rng.uniform(0, 1, 5))[::-1]])
            traj = integrate_mean_field(u0, params, 5.0, dt=0.005)
            base = np.abs(u0 - fp.pi).sum()
            for t in (0.5, 1.0, 2.0, 5.0):
                idx = int(round(t / 0.005))
                slack = np.abs(traj.states[idx] - fp.pi).sum() - math.exp(-t) * base
                worst = max(worst, slack)
    report(2, worst <= 1e-6, "max slack over e^-t bound = %.3g" % worst)


def test_c03_spectral_gap():
    cases = [(sigma, C, 1) for sigma in (0.5, 1.0, 2.0) for C in (1, 2, 5, 10)]
    cases.append((5.0, 5, 2))
    worst = -np.inf
    for sigma, C, d in cases:
        params = ModelParams(N=100, C=C, d=d, sigma=sigma)
        fp = fixed_point(params)
        max_re, _ = eigen_diagnostics(build_H(fp.pi, params))
        worst = max(worst, max_re)
    report(3, worst < -1.0 + 1e-9, "max Re(eig) over cases = %.9f" % worst)


def test_c04_lyapunov_and_kappa_consistency():
    params = ModelParams(N=400, C=2, d=2, sigma=2.0, beta=1.0)
    fp = fixed_point(params)
    H = build_H(fp.pi, params)
    Sigma = stationary_covariance(fp, params)
    V = noise_intensities(fp.pi)
    lyap_res = float(np.abs(H @ Sigma + Sigma @ H.T + np.diag(V[1:])).max())
    kappa = stationary_kappa(fp, params)
    quad = kappa_quadrature(H, w3(fp.pi, params)[1:])
    kappa_gap = float(np.abs(kappa[1:] - quad).max())
    params0 = ModelParams(N=400, C=2, d=2, sigma=2.0, beta=0.0)
    fp0 = fixed_point(params0)
    kappa0 = stationary_kappa(fp0, params0)
    ok = lyap_res <= 1e-10 and kappa_gap <= 1e-8 and np.all(kappa0 == 0.0)
    report(
        4,
        ok,
        "lyapunov residual %.3g, solve-vs-quadrature %.3g, beta=0 kappa exactly 0: %s"
        % (lyap_res, kappa_gap, bool(np.all(kappa0 == 0.0))),
    )


def test_c05_simulator_vs_erlang_b():
    params = ModelParams(N=1, C=2, d=3, sigma=1.0, beta=0.0)
    config = SimConfig(
        params=params, seed=42, warmup=5e3, horizon=5e4, replications=10, sample_dt=100.0
    )
    out = estimate_blocking(config)
    target = erlang_b(1.0, 2)
    ok = (
        abs(out.blocking_estimate - target) <= out.blocking_ci_halfwidth
        and out.blocking_ci_halfwidth <= 0.01
    )
    report(
        5,
        ok,
        "estimate %.5f +- %.5f vs Er(1,2)=%.1f"
        % (out.blocking_estimate, out.blocking_ci_halfwidth, target),
    )


def test_c06_per_arrival_blocking_identity():
    rng = np.random.default_rng(606)
    frozen = [
        (100, 2, np.array([20, 30, 50])),
        (100, 3, np.array([10, 20, 30, 40])),
        (50, 1, np.array([10, 40])),
        (200, 2, np.array([0, 100, 100])),
        (400, 4, np.array([80, 80, 80, 80, 80])),
    ]
    draws = 100000
    worst_sigma_units = 0.0
    for N, d, counts in frozen:
        C = len(counts) - 1
        tails = tails_from_counts(counts, N)
        p = tails[C] ** d
        cum = np.cumsum(counts)
        ids = rng.integers(0, N, size=(draws, d))
        mins = np.searchsorted(cum, ids, side="right").min(axis=1)
        freq = float(np.mean(mins == C))
        sd = math.sqrt(p * (1 - p) / draws)
        worst_sigma_units = max(worst_sigma_units, abs(freq - p) / sd)
    report(6, worst_sigma_units <= 3.0, "worst deviation %.2f binomial sigmas" % worst_sigma_units)


def test_c07_fclt_stationary_mean_and_covariance():
    params = ModelParams(N=400, C=2, d=2, sigma=2.0, beta=1.0)
    fp = fixed_point(params)
    stats = ou_stationary_stats(fp, params)
    config = SimConfig(
        params=params, seed=7, warmup=50.0, horizon=50.0 + 3000.0, replications=4
    )
    z = fluctuation_samples(config, "stationary", pi=fp.pi, spacing=2.0)
    assert z.shape[0] >= 2000
    mean = z[:, 1:].mean(axis=0)
    se = z[:, 1:].std(axis=0, ddof=1) / math.sqrt(z.shape[0])
    mean_sigmas = np.abs(mean - stats.kappa[1:]) / se
    var_ratio = z[:, 1:].var(axis=0, ddof=1) / np.diag(stats.Sigma)
    ok = np.all(mean_sigmas <= 3.0) and np.all(np.abs(var_ratio - 1.0) <= 0.2)
    report(
        7,
        ok,
        "mean dev %s SE units, var/Sigma %s (n=%d)"
        % (np.round(mean_sigmas, 2), np.round(var_ratio, 3), z.shape[0]),
    )


def test_c08_blocking_first_order_scaling():
    details = []
    ok = True
    for N in (100, 400, 1600):
        params = ModelParams(N=N, C=2, d=2, sigma=2.0, beta=1.0)
        fp = fixed_point(params)
        kappa = stationary_kappa(fp, params)
        rep = blocking_approximation(fp, kappa, params)
        config = SimConfig(params=params, seed=11, warmup=50.0, horizon=2050.0, replications=10)
        out = estimate_blocking(config)
        gap_fo = abs(out.blocking_estimate - rep.first_order)
        gap_pi = abs(out.blocking_estimate - rep.pi_C_d)
        allowed = 2.0 * (out.blocking_ci_halfwidth + N ** -0.5 * out.blocking_ci_halfwidth)
        ok = ok and gap_fo < gap_pi and gap_fo <= allowed
        details.append("N=%d |s-fo|=%.2g |s-pi|=%.2g allow=%.2g" % (N, gap_fo, gap_pi, allowed))
    # beta = 0 companion at N = 1600
    params0 = ModelParams(N=1600, C=2, d=2, sigma=2.0, beta=0.0)
    fp0 = fixed_point(params0)
    config0 = SimConfig(params=params0, seed=11, warmup=50.0, horizon=2050.0, replications=10)
    out0 = estimate_blocking(config0)
    scaled = 40.0 * abs(out0.blocking_estimate - fp0.pi[2] ** 2)
    ok0 = scaled <= 0.5 + 40.0 * out0.blocking_ci_halfwidth
    ok = ok and ok0
    details.append("beta=0 sqrtN|s-pi|=%.3g" % scaled)
    report(8, ok, "; ".join(details))


def test_c09_transient_fclt_spot_check():
    params = ModelParams(N=400, C=2, d=2, sigma=2.0, beta=1.0)
    u0 = np.array([1.0, 0.8, 0.3])
    mom = transient_ou_moments(u0, np.zeros(3), np.zeros((2, 2)), params, 1.0, dt=1e-3)
    m1, S1 = mom.mean[-1, 1:], mom.cov[-1]
    traj = integrate_mean_field(u0, params, 1.0, dt=1e-3)
    grid = type(traj)(times=traj.times[::1000], states=traj.states[::1000])
    reps = 2000
    samples = np.empty((reps, 3))
    for i in range(reps):
        config = SimConfig(
            params=params, seed=900 + i, warmup=0.5, horizon=1.0, replications=1
        )
        samples[i] = fluctuation_samples(config, "transient", u0=u0, mf_trajectory=grid)[-1]
    mean = samples[:, 1:].mean(axis=0)
    se = samples[:, 1:].std(axis=0, ddof=1) / math.sqrt(reps)
    mean_sigmas = np.abs(mean - m1) / se
    var_ratio = samples[:, 1:].var(axis=0, ddof=1) / np.diag(S1)
    ok = np.all(mean_sigmas <= 3.0) and np.all(np.abs(var_ratio - 1.0) <= 0.2)
    report(
        9,
        ok,
        "mean dev %s SE units, var/S(1) %s" % (np.round(mean_sigmas, 2), np.round(var_ratio, 3)),
    )


def test_c10_determinism_across_subcommands(tmp_path):
    commands = {
        "fixed-point": ["fixed-point", "--C", "3", "--d", "2", "--sigma", "1.5"],
        "mean-field": ["mean-field", "--C", "2", "--d", "2", "--sigma", "1",
                       "--t-end", "1", "--dt", "0.01", "--u0", "1,0,0"],
        "diffusion": ["diffusion", "--C", "2", "--d", "2", "--sigma", "2", "--beta", "1"],
        "simulate": ["simulate", "--N", "20", "--C", "2", "--d", "2", "--sigma", "1",
                     "--seed", "5", "--warmup", "10", "--horizon", "40",
                     "--replications", "2"],
        "fluctuations": ["fluctuations", "--N", "50", "--C", "2", "--d", "2",
                         "--sigma", "2", "--beta", "1", "--seed", "3",
                         "--warmup", "20", "--horizon", "80", "--replications", "2"],
        "blocking": ["blocking", "--C", "2", "--d", "2", "--sigma", "2",
                     "--beta", "1", "--N", "100"],
        "scaling": ["scaling", "--C", "2", "--d", "2", "--sigma", "1", "--seed", "2",
                    "--warmup", "10", "--horizon", "40", "--replications", "2",
                    "--N-list", "20,40"],
    }
    ok = True
    for name, args in commands.items():
        out1 = tmp_path / (name + "-1")
        out2 = tmp_path / (name + "-2")
        assert cli_main(args + ["-o", str(out1)]) == 0
        assert cli_main(args + ["-o", str(out2)]) == 0
        manifest = json.loads((out1 / "manifest.json").read_text())
        for data_file in manifest["outputs"]:
            same = (out1 / data_file).read_bytes() == (out2 / data_file).read_bytes()
            ok = ok and same
            if not same:
                print("mismatch in %s/%s" % (name, data_file))
    report(10, ok, "all data outputs byte-identical across reruns")
