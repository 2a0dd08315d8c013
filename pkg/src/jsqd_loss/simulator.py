"""Exact event-driven simulation of the finite-N loss system under JSQ(d).

Servers are aggregated by occupancy level: the routing decision depends only
on the sampled levels, so simulating the count vector (number of servers with
exactly k jobs) is an exact lumping of the full CTMC and removes the O(N)
per-server state.  The event loop is JIT-compiled with numba when available;
a pure-Python fallback keeps the package importable without it.

Reproducibility: replication ``i`` of a run with seed ``s`` uses the stream
seeded by ``numpy.random.SeedSequence(s, spawn_key=(i,))``.
"""

from dataclasses import dataclass, field
import io
import math

import numpy as np

from .model import ModelParams, arrival_rate

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


class DegenerateRunError(RuntimeError):
    """A replication observed no post-warmup arrivals."""


class ConfigurationError(ValueError):
    """Inconsistent simulation configuration."""


@dataclass(frozen=True)
class SimConfig:
    """Configuration of one simulation experiment."""

    params: ModelParams
    seed: int = 0
    warmup: float | None = None  # default: max(20, 10/min(1, sigma))
    horizon: float = 1000.0
    replications: int = 10
    sample_dt: float = 1.0
    initial: str | np.ndarray = "fixed-point-rounded"
    with_replacement: bool = True

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(
                self, "warmup", max(20.0, 10.0 / min(1.0, self.params.sigma))
            )
        if not (self.horizon > self.warmup >= 0.0):
            raise ConfigurationError("require horizon > warmup >= 0")
        if self.sample_dt <= 0:
            raise ConfigurationError("sample_dt must be positive")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")


@dataclass
class ReplicationResult:
    blocked: int
    accepted: int
    blocking: float
    sample_times: np.ndarray
    sample_tails: np.ndarray  # (K, C+1)


@dataclass
class SimOutcome:
    """Aggregated simulation estimates."""

    blocking_estimate: float
    blocking_ci_halfwidth: float
    arrivals_observed: int
    blocked: int
    per_replication: list = field(default_factory=list)
    trajectory: ReplicationResult | None = None
    fluctuation_samples: np.ndarray | None = None


def counts_from_tail_rounding(pi: np.ndarray, N: int) -> np.ndarray:
    """Initial counts with tails round(N*pi_n)/N, the closest lattice point to pi."""
    tails = np.rint(N * np.asarray(pi, dtype=float)).astype(np.int64)
    tails[0] = N
    counts = np.empty(len(pi), dtype=np.int64)
    counts[:-1] = tails[:-1] - tails[1:]
    counts[-1] = tails[-1]
    if counts.min() < 0 or counts.sum() != N:
        raise ConfigurationError("rounded tails are not monotone")
    return counts


def tails_from_counts(counts: np.ndarray, N: int) -> np.ndarray:
    """Occupancy tail fractions X_n = (number of servers with >= n jobs)/N.

    Works on a single counts vector or row-wise on a (K, C+1) sample matrix.
    """
    counts = np.asarray(counts)
    return np.cumsum(counts[..., ::-1], axis=-1)[..., ::-1] / float(N)


def _initial_counts(config: SimConfig) -> np.ndarray:
    params = config.params
    if isinstance(config.initial, str):
        if config.initial == "empty":
            counts = np.zeros(params.C + 1, dtype=np.int64)
            counts[0] = params.N
            return counts
        if config.initial == "fixed-point-rounded":
            from .meanfield import fixed_point

            fp = fixed_point(params)
            return counts_from_tail_rounding(fp.pi, params.N)
        raise ConfigurationError("unknown initial state %r" % (config.initial,))
    counts = np.asarray(config.initial, dtype=np.int64)
    if counts.shape != (params.C + 1,) or counts.min() < 0 or counts.sum() != params.N:
        raise ConfigurationError("initial counts must be nonnegative and sum to N")
    return counts.copy()


def _replication_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def step(counts: np.ndarray, params: ModelParams, rng: np.random.Generator):
    """Sample one CTMC event; returns (new counts, elapsed time, event kind).

    Event kinds: "accepted", "blocked", "departure".  Reference implementation
    used by tests; the production loop is the jitted kernel below.
    """
    N, C, d = params.N, params.C, params.d
    lam = arrival_rate(params)
    jobs = int(np.dot(np.arange(C + 1), counts))
    R = N * lam + jobs
    dt = rng.exponential(1.0 / R)
    new = counts.copy()
    if rng.random() * R < N * lam:
        levels = _sample_levels(new, N, d, rng)
        m = int(levels.min())
        if m == C:
            return new, dt, "blocked"
        new[m] -= 1
        new[m + 1] += 1
        return new, dt, "accepted"
    v = rng.random() * jobs
    acc = 0.0
    lvl = C
    for k in range(1, C + 1):
        acc += k * new[k]
        if v < acc:
            lvl = k
            break
    new[lvl] -= 1
    new[lvl - 1] += 1
    return new, dt, "departure"


def _sample_levels(counts, N, d, rng):
    """Levels of d servers sampled uniformly (with replacement) from the counts."""
    cum = np.cumsum(counts)
    ids = rng.integers(0, N, size=d)
    return np.searchsorted(cum, ids, side="right")


@njit(cache=True)
def _run_kernel(counts, N, C, d, lam, seed, warmup, horizon, sample_times, with_replacement):
    np.random.seed(seed)
    samples = np.zeros((sample_times.shape[0], C + 1), dtype=np.int64)
    si = 0
    t = 0.0
    jobs = 0
    for k in range(C + 1):
        jobs += k * counts[k]
    blocked = 0
    accepted = 0
    arr_rate = N * lam
    ids = np.empty(d, dtype=np.int64)
    while True:
        R = arr_rate + jobs
        tn = t + np.random.exponential(1.0 / R)
        while si < sample_times.shape[0] and sample_times[si] < tn:
            for k in range(C + 1):
                samples[si, k] = counts[k]
            si += 1
        if tn >= horizon:
            break
        t = tn
        if np.random.random() * R < arr_rate:
            # arrival: level of each sampled server via cumulative counts
            if with_replacement:
                m = C
                for j in range(d):
                    v = np.random.randint(0, N)
                    acc = 0
                    for k in range(C + 1):
                        acc += counts[k]
                        if v < acc:
                            if k < m:
                                m = k
                            break
            else:
                nd = d if d < N else N
                for j in range(nd):
                    while True:
                        cand = np.random.randint(0, N)
                        dup = False
                        for q in range(j):
                            if ids[q] == cand:
                                dup = True
                                break
                        if not dup:
                            ids[j] = cand
                            break
                m = C
                for j in range(nd):
                    v = ids[j]
                    acc = 0
                    for k in range(C + 1):
                        acc += counts[k]
                        if v < acc:
                            if k < m:
                                m = k
                            break
            if m == C:
                if t >= warmup:
                    blocked += 1
            else:
                counts[m] -= 1
                counts[m + 1] += 1
                jobs += 1
                if t >= warmup:
                    accepted += 1
        else:
            v = np.random.random() * jobs
            acc = 0.0
            lvl = C
            for k in range(1, C + 1):
                acc += k * counts[k]
                if v < acc:
                    lvl = k
                    break
            counts[lvl] -= 1
            counts[lvl - 1] += 1
            jobs -= 1
    return blocked, accepted, samples


def run_replication(config: SimConfig, replication_index: int) -> ReplicationResult:
    """Simulate [0, horizon] once; blocking counts only post-warmup arrivals."""
    params = config.params
    counts = _initial_counts(config)
    nsamp = int(math.floor((config.horizon - config.warmup) / config.sample_dt)) + 1
    sample_times = config.warmup + config.sample_dt * np.arange(nsamp)
    blocked, accepted, samples = _run_kernel(
        counts,
        params.N,
        params.C,
        params.d,
        arrival_rate(params),
        _replication_seed(config.seed, replication_index),
        config.warmup,
        config.horizon,
        sample_times,
        config.with_replacement,
    )
    if blocked + accepted == 0:
        raise DegenerateRunError(
            "replication %d saw no post-warmup arrivals" % replication_index
        )
    tails = tails_from_counts(samples, params.N)
    return ReplicationResult(
        blocked=int(blocked),
        accepted=int(accepted),
        blocking=blocked / (blocked + accepted),
        sample_times=sample_times,
        sample_tails=tails,
    )


def estimate_blocking(config: SimConfig) -> SimOutcome:
    """Mean blocking over replications with a 95% normal confidence interval."""
    if config.replications < 2:
        raise ConfigurationError("need at least 2 replications for a CI")
    reps = [run_replication(config, i) for i in range(config.replications)]
    est = np.array([r.blocking for r in reps])
    mean = float(est.mean())
    ci = 1.96 * float(est.std(ddof=1)) / math.sqrt(len(est))
    return SimOutcome(
        blocking_estimate=mean,
        blocking_ci_halfwidth=ci,
        arrivals_observed=sum(r.blocked + r.accepted for r in reps),
        blocked=sum(r.blocked for r in reps),
        per_replication=reps,
        trajectory=reps[0],
    )


def fluctuation_samples(
    config: SimConfig,
    mode: str = "stationary",
    u0=None,
    mf_trajectory=None,
    pi: np.ndarray | None = None,
    spacing: float = 1.0,
) -> np.ndarray:
    """Samples of the sqrt(N)-scaled deviation of the empirical tails.

    stationary: sqrt(N)*(X(t) - pi) at times spaced >= 1 after warmup, pooled
    over replications.  transient: sqrt(N)*(X(t_k) - x(t_k, u0)) on the grid of
    ``mf_trajectory`` for a single replication started from the rounding of u0.
    Component 0 of every returned vector is exactly 0.
    """
    params = config.params
    if mode == "stationary":
        if config.warmup <= 0:
            raise ConfigurationError("stationary sampling requires warmup > 0")
        if spacing < 1.0:
            raise ConfigurationError("decorrelation spacing must be >= 1")
        if pi is None:
            from .meanfield import fixed_point

            pi = fixed_point(params).pi
        out = []
        for i in range(config.replications):
            counts = _initial_counts(config)
            nsamp = int(math.floor((config.horizon - config.warmup) / spacing))
            times = config.warmup + spacing * (1 + np.arange(nsamp))
            _, _, samples = _run_kernel(
                counts,
                params.N,
                params.C,
                params.d,
                arrival_rate(params),
                _replication_seed(config.seed, i),
                config.warmup,
                config.horizon,
                times,
                config.with_replacement,
            )
            tails = tails_from_counts(samples, params.N)
            out.append(math.sqrt(params.N) * (tails - pi))
        z = np.vstack(out)
        z[:, 0] = 0.0
        return z
    if mode == "transient":
        if u0 is None or mf_trajectory is None:
            raise ConfigurationError("transient mode needs u0 and the mean-field trajectory")
        times = np.asarray(mf_trajectory.times, dtype=float)
        if times[-1] > config.horizon:
            raise ConfigurationError("mean-field grid extends past the simulation horizon")
        counts = counts_from_tail_rounding(np.asarray(u0, dtype=float), params.N)
        _, _, samples = _run_kernel(
            counts,
            params.N,
            params.C,
            params.d,
            arrival_rate(params),
            _replication_seed(config.seed, 0),
            0.0,
            config.horizon,
            times,
            config.with_replacement,
        )
        tails = tails_from_counts(samples, params.N)
        z = math.sqrt(params.N) * (tails - mf_trajectory.states)
        z[:, 0] = 0.0
        return z
    raise ConfigurationError("mode must be 'stationary' or 'transient'")


def trajectory_to_csv(rep: ReplicationResult) -> str:
    """CSV with columns t, X1, ..., XC."""
    C = rep.sample_tails.shape[1] - 1
    buf = io.StringIO()
    buf.write("t," + ",".join("X%d" % n for n in range(1, C + 1)) + "\n")
    for t, x in zip(rep.sample_times, rep.sample_tails):
        buf.write(",".join("%.17g" % v for v in (t, *x[1:])) + "\n")
    return buf.getvalue()


def fluctuations_to_csv(times: np.ndarray, z: np.ndarray) -> str:
    """CSV with columns t, Z1, ..., ZC."""
    C = z.shape[1] - 1
    buf = io.StringIO()
    buf.write("t," + ",".join("Z%d" % n for n in range(1, C + 1)) + "\n")
    for t, row in zip(times, z):
        buf.write(",".join("%.17g" % v for v in (t, *row[1:])) + "\n")
    return buf.getvalue()
