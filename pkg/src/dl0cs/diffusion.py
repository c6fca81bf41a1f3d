"""Synchronous diffusion l0-LMS recursions.

All per-node quantities are stacked into ``(P, N)`` arrays, one row per node.
A round reads only iteration-``i`` values and writes iteration-``i+1`` values,
so node ordering inside a round cannot matter.
"""

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InvalidParameterError
from .regularizer import (RegularizerParams, add_attraction, guard_gate, sparsity,
                          sparsity_rows, stop_check, GUARD_RATIO)
from .seeding import substream

VARIANTS = ("ATC", "CTA", "MB-ATC", "MB-CTA", "GENERAL")
DIVERGENCE_NORM = 1e12


@dataclass
class AlgorithmConfig:
    variant: str = "ATC"
    step_sizes: object = 1.0  # shared mu, or one value per node
    reg: RegularizerParams = field(default_factory=RegularizerParams)
    batch_size: int = 5
    max_iterations: int = 100_000
    use_adaptation_exchange: bool = True
    seed: int = 0
    use_stop_criterion: bool = True
    divergence_norm: float = DIVERGENCE_NORM

    def __post_init__(self):
        self.variant = self.variant.upper()
        if self.variant not in VARIANTS:
            raise InvalidParameterError(f"unknown variant {self.variant!r}")
        if np.any(np.asarray(self.step_sizes, dtype=float) <= 0):
            raise InvalidParameterError("step sizes must be positive")
        if self.batch_size < 1 or self.max_iterations < 1:
            raise InvalidParameterError("batch_size and max_iterations must be >= 1")

    @property
    def minibatch(self):
        return self.variant.startswith("MB-")

    def mu_vector(self, p):
        mu = np.broadcast_to(np.asarray(self.step_sizes, dtype=float), (p,))
        return mu.copy()


@dataclass
class DiffusionState:
    iteration: int
    weights: np.ndarray
    intermediates: Optional[np.ndarray] = None
    avg_sparsity_history: deque = field(default_factory=deque)
    node_rngs: Optional[list] = None
    diverged: bool = False

    @property
    def average(self):
        return self.weights.mean(axis=0)


@dataclass
class RunResult:
    final_estimate: np.ndarray
    iterations_used: int
    stop_reason: str  # "criterion" | "max-iterations" | "divergence"
    recorded_iterations: np.ndarray
    msd_trace: np.ndarray  # squared deviation of the network average, linear scale
    sparsity_trace: np.ndarray
    final_msd: float

    def iterations_to(self, msd_level):
        """First recorded iteration whose deviation is below ``msd_level``, or None."""
        hit = np.flatnonzero(self.msd_trace < msd_level)
        return int(self.recorded_iterations[hit[0]]) if hit.size else None


def instantaneous_gradient(u, d, w):
    return (d - w @ u) * u


def minibatch_gradient(rows, obs, w):
    rows = np.atleast_2d(rows)
    return rows.T @ (obs - rows @ w) / rows.shape[0]


def sample_minibatch(problem, partition, node, q, rng):
    """Draw ``q`` local row indices (0-based, with replacement) for ``node``."""
    local = partition.node_rows[node]
    if q > len(local):
        raise InvalidParameterError(f"batch {q} exceeds L_k = {len(local)}")
    r = rng.integers(0, len(local), size=q)
    rows = local[r]
    return r, problem.theta[rows], problem.observations[rows]


def _is_identity(mat):
    return mat.shape[0] == mat.shape[1] and np.array_equal(mat, np.eye(mat.shape[0]))


class _Kernel:
    """Pre-arranged arrays for one (config, problem, partition, weights) combination."""

    def __init__(self, config, problem, partition, weights):
        p = partition.node_count
        if weights.node_count != p:
            raise InvalidParameterError("weights and partition disagree on P")
        if config.minibatch and config.batch_size > partition.counts.min():
            raise InvalidParameterError("batch size exceeds min L_k")
        self.p, self.n = p, problem.n
        self.theta = problem.theta
        self.y = problem.observations
        self.counts = np.asarray(partition.counts)
        width = self.counts.max()
        self.row_table = np.zeros((p, width), dtype=np.intp)
        for k, rows in enumerate(partition.node_rows):
            self.row_table[k, :len(rows)] = rows
        self.node_index = np.arange(p)
        s = weights.s_matrix if config.use_adaptation_exchange else np.eye(p)
        # adapt_weights[k, l] = alpha_{l,k}
        self.adapt_weights = np.ascontiguousarray(s.T)
        self.a1 = None if _is_identity(weights.a1_matrix) else np.ascontiguousarray(weights.a1_matrix.T)
        self.a2 = None if _is_identity(weights.a2_matrix) else np.ascontiguousarray(weights.a2_matrix.T)
        mu = config.mu_vector(p)
        self.reg = config.reg
        self.mu_xi = np.ascontiguousarray(mu * config.reg.xi)
        self.minibatch = config.minibatch
        self.q = config.batch_size
        # step size folded into the mixing weights: mix[k, j] = mu_k alpha_{l(j),k} / |batch|
        if self.minibatch:
            self.mix = mu[:, None] * np.repeat(self.adapt_weights, self.q, axis=1) / self.q
        else:
            self.mix = mu[:, None] * self.adapt_weights
        self.variant = config.variant
        self.gate = guard_gate(self.n)
        self.divergence_norm = config.divergence_norm

    def rows_at(self, iteration):
        return self.row_table[self.node_index, iteration % self.counts]

    def adapt(self, phi, iteration, rngs):
        if self.minibatch:
            rows = np.concatenate([self.row_table[k, rng.integers(0, self.counts[k], size=self.q)]
                                   for k, rng in enumerate(rngs)])
        else:
            rows = self.rows_at(iteration)
        u = self.theta[rows]
        resid = self.y[rows][None, :] - phi @ u.T  # resid[k, j] = d_j - phi_k . u_j
        resid *= self.mix
        out = resid @ u
        add_attraction(np.ascontiguousarray(phi), self.mu_xi, self.reg.delta, out)
        return out

    def combine(self, mat_t, x):
        return x if mat_t is None else mat_t @ x

    def step(self, w, iteration, rngs):
        """One synchronous round; returns (w_next, intermediate)."""
        phi = self.combine(self.a1, w)
        psi = self.adapt(phi, iteration, rngs)
        w_next = self.combine(self.a2, psi)
        if self.minibatch and iteration > self.gate:
            s_prev = sparsity_rows(w, self.reg.tau)
            s_next = sparsity_rows(w_next, self.reg.tau)
            reject = (s_next - s_prev) > GUARD_RATIO * s_prev
            if reject.any():
                w_next[reject] = w[reject]
        inter = psi if self.a1 is None else phi
        return w_next, inter

    def diverged(self, w):
        # NaN fails the comparison, so non-finite iterates count as diverged
        return not np.max(np.einsum("ij,ij->i", w, w)) <= self.divergence_norm ** 2


def initial_state(config, problem, partition):
    p = partition.node_count
    rngs = [substream(config.seed, "minibatch", k) for k in range(p)] if config.minibatch else None
    return DiffusionState(iteration=1, weights=np.zeros((p, problem.n)),
                          avg_sparsity_history=deque(maxlen=config.reg.window),
                          node_rngs=rngs)


def _advance(kernel, state):
    w_next, inter = kernel.step(state.weights, state.iteration, state.node_rngs)
    hist = deque(state.avg_sparsity_history, maxlen=state.avg_sparsity_history.maxlen)
    hist.append(sparsity(w_next.mean(axis=0), kernel.reg.tau))
    return replace(state, iteration=state.iteration + 1, weights=w_next, intermediates=inter,
                   avg_sparsity_history=hist, diverged=kernel.diverged(w_next))


def _step_as(variant, state, config, problem, partition, weights):
    cfg = replace(config, variant=variant)
    return _advance(_Kernel(cfg, problem, partition, weights), state)


def step_general(state, config, problem, partition, weights):
    """phi = A1^T w;  theta = phi + mu S-weighted gradients + mu xi z(phi);  w = A2^T theta."""
    return _step_as("GENERAL", state, config, problem, partition, weights)


def step_atc(state, config, problem, partition, weights):
    """Adapt at w_k(i), then combine with A2 (A1 must be the identity)."""
    if not _is_identity(weights.a1_matrix):
        raise InvalidParameterError("ATC expects A1 = I; build weights with WeightMatrices.for_variant")
    return _step_as("ATC", state, config, problem, partition, weights)


def step_cta(state, config, problem, partition, weights):
    """Combine with A1, then adapt at phi_k(i) (A2 must be the identity)."""
    if not _is_identity(weights.a2_matrix):
        raise InvalidParameterError("CTA expects A2 = I; build weights with WeightMatrices.for_variant")
    return _step_as("CTA", state, config, problem, partition, weights)


def step_mb_atc(state, config, problem, partition, weights):
    return _step_as("MB-ATC", state, config, problem, partition, weights)


def step_mb_cta(state, config, problem, partition, weights):
    return _step_as("MB-CTA", state, config, problem, partition, weights)


def propagate(config, problem, partition, weights, w0, rounds, first_iteration=1):
    """Apply ``rounds`` synchronous rounds to ``w0`` with no stop rule or divergence check."""
    kernel = _Kernel(config, problem, partition, weights)
    rngs = initial_state(config, problem, partition).node_rngs
    w = np.array(w0, dtype=float)
    for it in range(first_iteration, first_iteration + rounds):
        w, _ = kernel.step(w, it, rngs)
    return w


def trajectory(config, problem, partition, weights, rounds):
    """Every iterate ``w(2), ..., w(rounds + 1)`` from the zero start, shape (rounds, P, N)."""
    kernel = _Kernel(config, problem, partition, weights)
    rngs = initial_state(config, problem, partition).node_rngs
    out = np.empty((rounds, partition.node_count, problem.n))
    w = np.zeros((partition.node_count, problem.n))
    for r in range(rounds):
        w, _ = kernel.step(w, r + 1, rngs)
        out[r] = w
    return out


def run(config, problem, partition, weights, record_every=100, initial=None):
    """Iterate until the stop rule fires, ``max_iterations`` rounds pass, or the iterates blow up."""
    kernel = _Kernel(config, problem, partition, weights)
    state = initial if initial is not None else initial_state(config, problem, partition)
    x = problem.x
    tau, window, band = config.reg.tau, config.reg.window, config.reg.band
    history = deque(state.avg_sparsity_history, maxlen=window)
    w, rngs = state.weights.copy(), state.node_rngs
    it0 = state.iteration

    rec_it, rec_msd, rec_sp = [], [], []

    def record(steps, avg):
        rec_it.append(steps)
        err = avg - x
        rec_msd.append(float(err @ err))
        rec_sp.append(sparsity(avg, tau))

    record(0, w.mean(axis=0))
    reason = "max-iterations"
    steps = 0
    while steps < config.max_iterations:
        w, _ = kernel.step(w, it0 + steps, rngs)
        steps += 1
        if kernel.diverged(w):
            reason = "divergence"
            break
        avg = w.mean(axis=0)
        history.append(sparsity(avg, tau))
        if steps % record_every == 0:
            record(steps, avg)
        if config.use_stop_criterion and stop_check(history, window, band):
            reason = "criterion"
            break

    avg = w.mean(axis=0)
    if rec_it[-1] != steps:
        record(steps, avg)
    return RunResult(final_estimate=avg, iterations_used=steps, stop_reason=reason,
                     recorded_iterations=np.array(rec_it), msd_trace=np.array(rec_msd),
                     sparsity_trace=np.array(rec_sp), final_msd=rec_msd[-1])
