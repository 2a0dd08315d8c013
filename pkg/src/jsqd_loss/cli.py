"""Command-line front end: config-driven experiments with reproducible manifests.

Subcommands: fixed-point, mean-field, diffusion, simulate, fluctuations,
blocking, scaling.  Values come from defaults, overridden by a JSON config
file (--config), overridden by explicit CLI flags, in that order.  Every run
writes the resolved configuration, seed and package version to manifest.json
next to its data files.  Data files are written atomically (temp + rename)
and are byte-identical across reruns with the same configuration.

Exit codes: 0 success, 2 usage error, 3 invalid configuration or parameters,
4 unwritable output path, 5 numerical or runtime failure.  Failures emit a
machine-readable JSON object on stderr.
"""

import argparse
import datetime
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .model import InvalidParametersError, ModelParams, build_H
from .meanfield import (
    FixedPointConvergenceError,
    IntegrationInstabilityError,
    default_dt,
    fixed_point,
    integrate_mean_field,
)
from .diffusion import ou_stationary_stats, stats_to_json
from .simulator import (
    ConfigurationError,
    DegenerateRunError,
    SimConfig,
    estimate_blocking,
    fluctuation_samples,
    fluctuations_to_csv,
    trajectory_to_csv,
)
from .analytics import (
    blocking_approximation,
    error_scaling_experiment,
    scaling_rows_to_csv,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_OUTPUT = 4
EXIT_RUNTIME = 5

MODEL_KEYS = ("N", "C", "d", "sigma", "beta")
SIM_KEYS = ("seed", "warmup", "horizon", "replications", "sample_dt", "initial")


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _add_model_args(sub):
    sub.add_argument("--N", type=int, default=None)
    sub.add_argument("--C", type=int, default=None)
    sub.add_argument("--d", type=int, default=None)
    sub.add_argument("--sigma", type=float, default=None)
    sub.add_argument("--beta", type=float, default=None)


def _add_sim_args(sub):
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--warmup", type=float, default=None)
    sub.add_argument("--horizon", type=float, default=None)
    sub.add_argument("--replications", type=int, default=None)
    sub.add_argument("--sample-dt", dest="sample_dt", type=float, default=None)
    sub.add_argument("--initial", type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jsqd",
        description="Loss-system JSQ(d) toolkit: mean-field, fluctuations, simulation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command")
    common = {}
    for name in (
        "fixed-point",
        "mean-field",
        "diffusion",
        "simulate",
        "fluctuations",
        "blocking",
        "scaling",
    ):
        sub = subs.add_parser(name)
        sub.add_argument("--config", type=str, default=None, help="JSON config file")
        sub.add_argument("-o", "--output", type=str, default=None, help="output directory")
        _add_model_args(sub)
        common[name] = sub
    for name in ("fixed-point", "blocking", "diffusion"):
        common[name].add_argument("--tol", type=float, default=None)
    common["mean-field"].add_argument("--t-end", dest="t_end", type=float, default=None)
    common["mean-field"].add_argument("--dt", type=float, default=None)
    common["mean-field"].add_argument(
        "--u0", type=str, default=None, help="comma-separated tail vector"
    )
    for name in ("simulate", "fluctuations", "scaling"):
        _add_sim_args(common[name])
    common["fluctuations"].add_argument(
        "--mode", choices=("stationary", "transient"), default=None
    )
    common["fluctuations"].add_argument("--spacing", type=float, default=None)
    common["fluctuations"].add_argument("--u0", type=str, default=None)
    common["scaling"].add_argument(
        "--N-list", dest="N_list", type=str, default=None, help="comma-separated N values"
    )
    return parser


def _resolve(args, defaults: dict) -> dict:
    """defaults < config file < CLI flags."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config) as handle:
            loaded = json.load(handle)
        if not isinstance(loaded, dict):
            raise ConfigurationError("config file must hold a JSON object")
        for key, value in loaded.items():
            if key not in resolved:
                raise ConfigurationError("unknown config key %r" % key)
            resolved[key] = value
    for key in resolved:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _model_params(cfg: dict) -> ModelParams:
    return ModelParams(
        N=int(cfg["N"]),
        C=int(cfg["C"]),
        d=int(cfg["d"]),
        sigma=float(cfg["sigma"]),
        beta=float(cfg["beta"]),
    )


def _sim_config(cfg: dict, params: ModelParams) -> SimConfig:
    initial = cfg["initial"]
    if isinstance(initial, (list, tuple)):
        initial = np.asarray(initial, dtype=np.int64)
    return SimConfig(
        params=params,
        seed=int(cfg["seed"]),
        warmup=None if cfg["warmup"] is None else float(cfg["warmup"]),
        horizon=float(cfg["horizon"]),
        replications=int(cfg["replications"]),
        sample_dt=float(cfg["sample_dt"]),
        initial=initial,
    )


def _parse_vector(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    return np.asarray([float(x) for x in str(text).split(",")], dtype=float)


MODEL_DEFAULTS = {"N": 100, "C": 2, "d": 2, "sigma": 1.0, "beta": 0.0}
SIM_DEFAULTS = {
    "seed": 0,
    "warmup": None,
    "horizon": 1000.0,
    "replications": 10,
    "sample_dt": 1.0,
    "initial": "fixed-point-rounded",
}


def _write_outputs(outdir: str, command: str, cfg: dict, files: dict) -> None:
    os.makedirs(outdir, exist_ok=True)
    names = []
    for name, text in files.items():
        _atomic_write(os.path.join(outdir, name), text)
        names.append(name)
    manifest = {
        "command": command,
        "config": {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in cfg.items()},
        "seed": cfg.get("seed"),
        "version": __version__,
        "outputs": sorted(names),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    _atomic_write(
        os.path.join(outdir, "manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _json_dumps(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _cmd_fixed_point(args, outdir):
    cfg = _resolve(args, {**MODEL_DEFAULTS, "tol": 1e-12})
    params = _model_params(cfg)
    fp = fixed_point(params, tol=float(cfg["tol"]))
    payload = {
        "pi": fp.pi.tolist(),
        "lambda_hat": fp.lambda_hat.tolist(),
        "residual": fp.residual,
    }
    _write_outputs(outdir, "fixed-point", cfg, {"fixed_point.json": _json_dumps(payload)})


def _cmd_mean_field(args, outdir):
    cfg = _resolve(args, {**MODEL_DEFAULTS, "t_end": 10.0, "dt": None, "u0": None})
    params = _model_params(cfg)
    u0 = _parse_vector(cfg["u0"])
    if u0 is None:
        u0 = np.zeros(params.C + 1)
        u0[0] = 1.0
    dt = None if cfg["dt"] is None else float(cfg["dt"])
    traj = integrate_mean_field(u0, params, float(cfg["t_end"]), dt)
    _write_outputs(outdir, "mean-field", cfg, {"trajectory.csv": traj.to_csv()})


def _cmd_diffusion(args, outdir):
    cfg = _resolve(args, {**MODEL_DEFAULTS, "tol": 1e-12})
    params = _model_params(cfg)
    fp = fixed_point(params, tol=float(cfg["tol"]))
    stats = ou_stationary_stats(fp, params)
    text = stats_to_json(stats, build_H(fp.pi, params)) + "\n"
    _write_outputs(outdir, "diffusion", cfg, {"diffusion.json": text})


def _cmd_simulate(args, outdir):
    cfg = _resolve(args, {**MODEL_DEFAULTS, **SIM_DEFAULTS})
    params = _model_params(cfg)
    config = _sim_config(cfg, params)
    outcome = estimate_blocking(config)
    payload = {
        "blocking_estimate": outcome.blocking_estimate,
        "ci_halfwidth": outcome.blocking_ci_halfwidth,
        "arrivals": outcome.arrivals_observed,
        "blocked": outcome.blocked,
        "config_echo": {k: cfg[k] for k in (*MODEL_KEYS, *SIM_KEYS) if not isinstance(cfg[k], np.ndarray)},
        "seed": config.seed,
    }
    files = {
        "outcome.json": _json_dumps(payload),
        "trajectory.csv": trajectory_to_csv(outcome.trajectory),
    }
    _write_outputs(outdir, "simulate", cfg, files)


def _cmd_fluctuations(args, outdir):
    cfg = _resolve(
        args,
        {**MODEL_DEFAULTS, **SIM_DEFAULTS, "mode": "stationary", "spacing": 1.0, "u0": None},
    )
    params = _model_params(cfg)
    config = _sim_config(cfg, params)
    fp = fixed_point(params)
    stats = ou_stationary_stats(fp, params)
    if cfg["mode"] == "stationary":
        z = fluctuation_samples(config, "stationary", pi=fp.pi, spacing=float(cfg["spacing"]))
        times = np.arange(z.shape[0], dtype=float)  # pooled sample index
    else:
        u0 = _parse_vector(cfg["u0"])
        if u0 is None:
            raise ConfigurationError("transient fluctuations need --u0")
        t_end = config.horizon
        fine = max(1, int(round(config.sample_dt / default_dt(params))))
        traj = integrate_mean_field(u0, params, t_end, config.sample_dt / fine)
        keep = slice(None, None, fine)
        sub = type(traj)(times=traj.times[keep], states=traj.states[keep])
        z = fluctuation_samples(config, "transient", u0=u0, mf_trajectory=sub)
        times = sub.times
    emp_mean = z[:, 1:].mean(axis=0)
    emp_cov = np.cov(z[:, 1:].T, ddof=1).reshape(params.C, params.C)
    comparison = {
        "empirical_mean": emp_mean.tolist(),
        "empirical_cov": emp_cov.tolist(),
        "kappa": stats.kappa[1:].tolist(),
        "sigma": stats.Sigma.tolist(),
        "samples": int(z.shape[0]),
    }
    files = {
        "fluctuations.csv": fluctuations_to_csv(times, z),
        "comparison.json": _json_dumps(comparison),
    }
    _write_outputs(outdir, "fluctuations", cfg, files)


def _cmd_blocking(args, outdir):
    cfg = _resolve(args, {**MODEL_DEFAULTS, "tol": 1e-12})
    params = _model_params(cfg)
    fp = fixed_point(params, tol=float(cfg["tol"]))
    from .diffusion import stationary_kappa

    kappa = stationary_kappa(fp, params)
    report = blocking_approximation(fp, kappa, params)
    payload = {
        "pi_C_d": report.pi_C_d,
        "first_order": report.first_order,
        "kappa_term": report.kappa_term,
        "beta_term": report.beta_term,
        "N": report.N,
    }
    _write_outputs(outdir, "blocking", cfg, {"blocking.json": _json_dumps(payload)})


def _cmd_scaling(args, outdir):
    cfg = _resolve(args, {**MODEL_DEFAULTS, **SIM_DEFAULTS, "N_list": "100,400"})
    params = _model_params(cfg)
    if isinstance(cfg["N_list"], str):
        N_list = [int(x) for x in cfg["N_list"].split(",")]
    else:
        N_list = [int(x) for x in cfg["N_list"]]
    rows = error_scaling_experiment(
        params,
        N_list,
        seed=int(cfg["seed"]),
        warmup=None if cfg["warmup"] is None else float(cfg["warmup"]),
        horizon=float(cfg["horizon"]),
        replications=int(cfg["replications"]),
    )
    _write_outputs(outdir, "scaling", cfg, {"scaling.csv": scaling_rows_to_csv(rows)})


_COMMANDS = {
    "fixed-point": _cmd_fixed_point,
    "mean-field": _cmd_mean_field,
    "diffusion": _cmd_diffusion,
    "simulate": _cmd_simulate,
    "fluctuations": _cmd_fluctuations,
    "blocking": _cmd_blocking,
    "scaling": _cmd_scaling,
}


def _error_json(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        _error_json("usage", "no subcommand given")
        return EXIT_USAGE
    outdir = args.output or os.environ.get("JSQD_OUTPUT_DIR") or "."
    try:
        _COMMANDS[args.command](args, outdir)
    except (InvalidParametersError, ConfigurationError, json.JSONDecodeError, ValueError) as exc:
        _error_json("invalid-config", str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _error_json("output-error", str(exc))
        return EXIT_OUTPUT
    except (
        FixedPointConvergenceError,
        IntegrationInstabilityError,
        DegenerateRunError,
        ArithmeticError,
    ) as exc:
        _error_json("runtime-error", str(exc))
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
