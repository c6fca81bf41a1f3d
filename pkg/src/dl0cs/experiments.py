"""Monte-Carlo experiment runner: learning curves, success rates, step-size searches and sweeps."""

import csv
import dataclasses
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .diffusion import AlgorithmConfig, run
from .errors import InvalidParameterError
from .network import (WeightMatrices, averaging_weights, complete_graph, grow_network,
                      metropolis_weights, uniform_weights)
from .regularizer import RegularizerParams
from .seeding import derive_seed
from .signal import make_instance, partition_uniform
from .stability import mu_exact

MSD_FLOOR_DB = -300.0
SUCCESS_MSD = 1e-2
SAFE_FRACTION = 0.5
SWEEP_PARAMS = ("sigma", "xi", "p", "mu")


@dataclass
class ExperimentConfig:
    # problem
    n: int = 1000
    m: int = 200
    k: int = 25
    sigma: float = 3e-3
    # network
    p: int = 20
    p_links: int = 3
    topology_seed: int = 7
    fixed_topology: bool = True
    adaptation: str = "metropolis"  # metropolis | uniform | identity
    combination: str = "averaging"  # averaging | metropolis | uniform
    # algorithm
    variant: str = "ATC"
    mu: Optional[float] = None  # None: SAFE_FRACTION of the mean-square limit
    xi: float = 5e-6
    delta: float = 10.0
    tau: float = 1e-3
    stop_window: Optional[int] = None  # None: 0.2 N
    stop_band: int = 20
    q: int = 5
    adapt_exchange: bool = True
    use_stop_criterion: bool = True
    max_iterations: int = 100_000
    # harness
    runs: int = 50
    seed: int = 1
    workers: int = 1
    record_every: int = 100

    def __post_init__(self):
        if self.runs < 1 or self.workers < 1 or self.record_every < 1:
            raise InvalidParameterError("runs, workers and record_every must be >= 1")
        if not 0 < self.k <= self.n or not 1 <= self.m < self.n or not 1 <= self.p <= self.m:
            raise InvalidParameterError(f"inconsistent sizes N={self.n}, M={self.m}, "
                                        f"K={self.k}, P={self.p}")
        if self.adaptation not in ("metropolis", "uniform", "identity"):
            raise InvalidParameterError(f"unknown adaptation weights {self.adaptation!r}")
        if self.combination not in ("averaging", "metropolis", "uniform"):
            raise InvalidParameterError(f"unknown combination weights {self.combination!r}")
        self.variant = self.variant.upper()
        self.regularizer()  # validates the regularizer fields

    def regularizer(self):
        window = self.stop_window if self.stop_window is not None else max(1, round(0.2 * self.n))
        return RegularizerParams(xi=self.xi, delta=self.delta, tau=self.tau,
                                 window=window, band=self.stop_band)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# config files

def _parse_value(kind, text):
    text = text.strip()
    optional = "Optional" in str(kind) or "None" in str(kind)
    if optional and text.lower() in ("none", ""):
        return None
    base = kind
    if optional:
        base = int if "int" in str(kind) else float
    if base is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InvalidParameterError(f"not a boolean: {text!r}")
    try:
        if base is int:
            return int(text)
        if base is float:
            return float(text)
    except ValueError:
        raise InvalidParameterError(f"cannot read {text!r} as {base.__name__}") from None
    return text


def config_fields():
    return {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def parse_assignments(pairs):
    """Turn ``[(key, text), ...]`` into typed overrides; unknown keys are errors."""
    kinds = config_fields()
    out = {}
    for key, text in pairs:
        key = key.strip().lower().replace("-", "_")
        if key not in kinds:
            raise InvalidParameterError(f"unknown config key {key!r}")
        out[key] = _parse_value(kinds[key], text)
    return out


def parse_config_text(text):
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameterError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        pairs.append((key, value))
    return parse_assignments(pairs)


def format_config(cfg):
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if v is None else str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def load_config(path=None, overrides=None):
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    values.update(overrides or {})
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# building blocks

def msd_db(errors_sq):
    """10 log10 of the mean squared deviation over runs, floored at -300 dB."""
    errors_sq = np.asarray(errors_sq, dtype=float).reshape(-1)
    if errors_sq.size == 0:
        raise InvalidParameterError("msd_db needs at least one value")
    mean = errors_sq.mean()
    if mean <= 0:
        return MSD_FLOOR_DB
    return max(MSD_FLOOR_DB, 10 * math.log10(mean))


def build_weights(cfg, topology_seed=None):
    p = cfg.p
    if p == 1:
        one = np.ones((1, 1))
        return WeightMatrices(one, one, one)
    seed = cfg.topology_seed if topology_seed is None else topology_seed
    topo = grow_network(p, cfg.p_links, seed) if p > cfg.p_links else complete_graph(p)
    s = {"metropolis": metropolis_weights, "uniform": lambda t: uniform_weights(p),
         "identity": lambda t: np.eye(p)}[cfg.adaptation](topo)
    a = {"averaging": averaging_weights, "metropolis": metropolis_weights,
         "uniform": lambda t: uniform_weights(p)}[cfg.combination](topo)
    return WeightMatrices.for_variant(cfg.variant, s, a)


def combination_matrix(weights):
    a1, a2 = weights.a1_matrix, weights.a2_matrix
    return a2 if np.array_equal(a1, np.eye(a1.shape[0])) else a1


def safe_mu(cfg, weights=None):
    """SAFE_FRACTION of the largest step size with rho(F) < 1 for this network."""
    weights = weights if weights is not None else build_weights(cfg)
    return SAFE_FRACTION * mu_exact(combination_matrix(weights), weights.s_matrix, cfg.n, cfg.m).value


def resolve_mu(cfg, weights=None):
    return cfg.mu if cfg.mu is not None else safe_mu(cfg, weights)


def algorithm_config(cfg, mu, seed):
    return AlgorithmConfig(variant=cfg.variant, step_sizes=mu, reg=cfg.regularizer(),
                           batch_size=cfg.q, max_iterations=cfg.max_iterations,
                           use_adaptation_exchange=cfg.adapt_exchange, seed=seed,
                           use_stop_criterion=cfg.use_stop_criterion)


@dataclass
class RunSummary:
    run_index: int
    seed: int
    final_msd: float
    iterations_used: int
    stop_reason: str
    success: bool
    elapsed_seconds: float
    recorded_iterations: np.ndarray = field(repr=False)
    msd_trace: np.ndarray = field(repr=False)
    sparsity_trace: np.ndarray = field(repr=False)
    initial_msd: float = 1.0
    error: Optional[str] = None

    @property
    def final_msd_db(self):
        return msd_db([self.final_msd]) if np.isfinite(self.final_msd) else float("inf")

    def record(self):
        return {"final_msd_db": self.final_msd_db, "iterations_used": self.iterations_used,
                "stop_reason": self.stop_reason, "success": self.success, "seed": self.seed,
                "elapsed_seconds": self.elapsed_seconds}


def run_seed(cfg, run_index):
    return derive_seed(cfg.seed, "run", run_index)


def single_run(cfg, run_index, mu, weights=None, instance=None):
    """One Monte-Carlo run; exceptions become a failure record."""
    seed = run_seed(cfg, run_index)
    start = time.perf_counter()
    try:
        if weights is None:
            weights = build_weights(cfg, None if cfg.fixed_topology
                                    else derive_seed(cfg.seed, "topology", run_index))
        if instance is None:
            instance = make_instance(cfg.n, cfg.m, cfg.k, cfg.sigma, seed)
        partition = partition_uniform(instance, cfg.p)
        with threadpool_limits(1):
            res = run(algorithm_config(cfg, mu, seed), instance, partition, weights,
                      record_every=cfg.record_every)
    except Exception as exc:  # noqa: BLE001 - recorded, not raised
        empty = np.zeros(0)
        return RunSummary(run_index, seed, float("nan"), 0, "error", False,
                          time.perf_counter() - start, empty.astype(int), empty, empty,
                          error=f"{type(exc).__name__}: {exc}")
    return RunSummary(run_index=run_index, seed=seed, final_msd=res.final_msd,
                      iterations_used=res.iterations_used, stop_reason=res.stop_reason,
                      success=bool(res.final_msd < SUCCESS_MSD),
                      elapsed_seconds=time.perf_counter() - start,
                      recorded_iterations=res.recorded_iterations, msd_trace=res.msd_trace,
                      sparsity_trace=res.sparsity_trace, initial_msd=float(res.msd_trace[0]))


def _run_job(args):
    return single_run(*args)


def run_many(cfg, mu, indices, weights=None):
    """Runs in index order; the pool only changes where they execute."""
    jobs = [(cfg, t, mu, weights) for t in indices]
    if cfg.workers == 1 or len(jobs) == 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
        return list(pool.map(_run_job, jobs))


# ---------------------------------------------------------------------------
# Monte Carlo

@dataclass
class MonteCarloResult:
    config: ExperimentConfig
    mu: float
    runs: list
    iterations: np.ndarray
    msd_db_trace: np.ndarray
    mean_sparsity: np.ndarray
    all_stopped: np.ndarray
    success_rate: float
    wall_time: float

    @property
    def final_msd_db(self):
        return float(self.msd_db_trace[-1]) if len(self.msd_db_trace) else float("nan")

    @property
    def iterations_mean(self):
        return float(np.mean([r.iterations_used for r in self.runs]))

    def iterations_to(self, level_db):
        hit = np.flatnonzero(self.msd_db_trace < level_db)
        return int(self.iterations[hit[0]]) if hit.size else None


def carry_forward(grid, iterations, values):
    """Value at each grid point = last recorded value at or before it."""
    pos = np.searchsorted(iterations, grid, side="right") - 1
    return np.asarray(values)[np.clip(pos, 0, None)]


def aggregate(runs):
    good = [r for r in runs if r.error is None]
    if not good:
        empty = np.zeros(0)
        return empty.astype(int), empty, empty, empty.astype(bool)
    grid = np.unique(np.concatenate([r.recorded_iterations for r in good]))
    err = np.zeros(len(grid))
    spars = np.zeros(len(grid))
    for r in good:  # run-index order keeps the floating-point sums reproducible
        err += carry_forward(grid, r.recorded_iterations, r.msd_trace)
        spars += carry_forward(grid, r.recorded_iterations, r.sparsity_trace)
    err /= len(good)
    spars /= len(good)
    trace = np.array([msd_db([e]) if np.isfinite(e) else np.inf for e in err])
    stopped = grid >= max(r.iterations_used for r in good)
    return grid, trace, spars, stopped


def monte_carlo(cfg, weights=None, mu=None):
    start = time.perf_counter()
    if weights is None and cfg.fixed_topology:
        weights = build_weights(cfg)
    mu = mu if mu is not None else resolve_mu(cfg, weights if weights is not None else build_weights(cfg))
    runs = run_many(cfg, mu, range(cfg.runs), weights)
    grid, trace, spars, stopped = aggregate(runs)
    return MonteCarloResult(config=cfg, mu=mu, runs=runs, iterations=grid, msd_db_trace=trace,
                            mean_sparsity=spars, all_stopped=stopped,
                            success_rate=sum(r.success for r in runs) / len(runs),
                            wall_time=time.perf_counter() - start)


# ---------------------------------------------------------------------------
# step-size search

@dataclass
class MuMaxResult:
    value: Optional[float]
    found: bool
    mode: str
    evaluations: list  # (mu, pass_fraction) in evaluation order
    hit_upper_end: bool = False


def _passes(run, mode):
    if run.error is not None:
        return False
    if mode == "success":
        return run.success
    # no blow-up and no worse than the all-zero starting point
    return run.stop_reason != "divergence" and run.final_msd <= run.initial_msd


def empirical_mu_max(cfg, runs_per_point=5, mu_range=(0.05, 10.0), mode="success", rel_tol=0.05):
    """Largest mu at which every run passes, located by bisection to ``rel_tol``.

    The same run indices (hence the same instances) are used at every mu.
    """
    if runs_per_point < 1:
        raise InvalidParameterError("runs_per_point must be >= 1")
    if mode not in ("success", "no-divergence"):
        raise InvalidParameterError(f"unknown mode {mode!r}")
    lo, hi = map(float, mu_range)
    if not 0 < lo < hi:
        raise InvalidParameterError("need 0 < low < high")
    weights = build_weights(cfg) if cfg.fixed_topology else None
    evals = []

    def check(mu):
        runs = run_many(cfg, mu, range(runs_per_point), weights)
        frac = sum(_passes(r, mode) for r in runs) / len(runs)
        evals.append((mu, frac))
        return frac == 1.0

    if not check(lo):
        return MuMaxResult(None, False, mode, evals)
    if check(hi):
        return MuMaxResult(hi, True, mode, evals, hit_upper_end=True)
    while hi > lo * (1 + rel_tol):
        mid = math.sqrt(lo * hi)
        if check(mid):
            lo = mid
        else:
            hi = mid
    return MuMaxResult(lo, True, mode, evals)


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepRow:
    value: float
    msd_db: float
    success_rate: float
    iterations_mean: float


def sweep(cfg, parameter, values):
    """Monte Carlo per value of ``parameter``; the topology stays fixed for all values but P."""
    param = parameter.lower()
    if param not in SWEEP_PARAMS:
        raise InvalidParameterError(f"cannot sweep {parameter!r}; choose from {SWEEP_PARAMS}")
    rows = []
    for v in values:
        sub = cfg.replace(**{param: int(v) if param == "p" else float(v)})
        res = monte_carlo(sub)
        rows.append(SweepRow(float(v), res.final_msd_db, res.success_rate, res.iterations_mean))
    return rows


# ---------------------------------------------------------------------------
# output

def _num(v):
    return repr(float(v)) if np.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


def _csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def learning_curve_csv(iterations, msd_db_trace, sparsity, stopped):
    return _csv(["iteration", "msd_db", "avg_sparsity", "stopped"],
                [[int(i), _num(d), _num(s), int(bool(st))]
                 for i, d, s, st in zip(iterations, msd_db_trace, sparsity, stopped)])


def run_curve_csv(summary):
    it = summary.recorded_iterations
    trace = [msd_db([e]) if np.isfinite(e) else np.inf for e in summary.msd_trace]
    return learning_curve_csv(it, trace, summary.sparsity_trace, it >= summary.iterations_used)


def mc_curve_csv(result):
    return learning_curve_csv(result.iterations, result.msd_db_trace, result.mean_sparsity,
                              result.all_stopped)


def runs_csv(runs):
    return _csv(["run", "seed", "final_msd_db", "iterations_used", "stop_reason", "success", "error"],
                [[r.run_index, r.seed, _num(r.final_msd_db), r.iterations_used, r.stop_reason,
                  int(r.success), r.error or ""] for r in runs])


def sweep_csv(rows):
    return _csv(["value", "msd_db", "success_rate", "iterations_mean"],
                [[_num(r.value), _num(r.msd_db), _num(r.success_rate), _num(r.iterations_mean)]
                 for r in rows])
