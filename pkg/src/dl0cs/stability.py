"""Step-size stability analysis for diffusion l0-LMS.

Two routes are provided:

* the deterministic period product ``Gamma`` over one data-recycling period,
  whose (N - M + 1)-th largest eigenvalue modulus decides convergence for a
  fixed measurement matrix;
* the P^2 x P^2 mean-square matrix ``F`` for Gaussian ensembles, with the
  analytic step-size bracket and a bisection for the exact limit.

The module also carries randomized checks of the three Kronecker-product
spectral-radius inequalities the analysis relies on.
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import InvalidParameterError
from .network import is_doubly_stochastic
from .seeding import substream

DENSE_LIMIT = 4000
GAMMA_LIMIT = 4000


# ---------------------------------------------------------------------------
# spectral radius

def _power_radius(mat, tol, max_iter):
    # Collatz-Wielandt bounds on (I + X); the shift removes periodicity and keeps v > 0
    v = np.ones(mat.shape[0])
    lo, hi = 0.0, np.inf
    for _ in range(max_iter):
        w = mat @ v + v
        ratios = w / v
        lo, hi = ratios.min(), ratios.max()
        if hi - lo <= tol * hi:
            break
        v = w / w.max()
    else:
        warnings.warn("power iteration hit max_iter before the bounds met")
    return 0.5 * (lo + hi) - 1.0


def spectral_radius(mat, method="auto", tol=1e-13, max_iter=200_000):
    """Largest eigenvalue modulus.

    ``method`` is ``"dense"`` (LAPACK eigenvalues), ``"power"`` (shifted power
    iteration, entrywise-nonnegative matrices only) or ``"auto"``, which uses the
    dense solver up to ``DENSE_LIMIT`` rows.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidParameterError(f"spectral radius needs a square matrix, got {mat.shape}")
    if method == "auto":
        method = "dense" if mat.shape[0] <= DENSE_LIMIT or mat.min() < 0 else "power"
    if method == "dense":
        return float(np.abs(np.linalg.eigvals(mat)).max())
    if method == "power":
        if mat.min() < 0:
            raise InvalidParameterError("power iteration needs an entrywise nonnegative matrix")
        return float(_power_radius(mat, tol, max_iter))
    raise InvalidParameterError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# deterministic period product

@dataclass
class GammaProduct:
    matrix: np.ndarray
    period: int
    eigen_moduli: np.ndarray  # descending
    eigenvalues: np.ndarray = field(default=None, repr=False)

    def modulus_at(self, rank):
        """1-based rank in the descending modulus order."""
        return float(self.eigen_moduli[rank - 1])

    def governing_modulus(self, n, m):
        """Largest modulus once the N - M eigenvalues nearest to 1 are set aside.

        Equals ``modulus_at(N - M + 1)`` whenever that value is below one; unlike
        the plain rank it keeps growing past one instead of sticking at the
        structural unit eigenvalues.
        """
        lam = self.eigenvalues
        rest = np.argsort(np.abs(lam - 1.0), kind="stable")[n - m:]
        return float(np.abs(lam[rest]).max()) if rest.size else 0.0


def lcm_period(counts):
    return int(reduce(math.lcm, (int(c) for c in counts), 1))


def _right_mix(g, mat, p, n):
    # g @ (mat kron I_N) without forming the Kronecker product
    blocks = g.reshape(g.shape[0], p, n)
    return np.einsum("ilj,lk->ikj", blocks, mat).reshape(g.shape[0], p * n)


def build_gamma(problem, partition, weights, step_sizes, use_adaptation_exchange=True):
    """Product over one data period of the transposed error-transition matrices.

    The factor for iteration n is ``(A1 kron I) [I - D H(n)] (A2 kron I)`` with
    ``H(n) = blockdiag_k(sum_l alpha_{l,k} u_l(n) u_l(n)^T)``; its eigenvalues are
    those of the map carrying the stacked error vector across one period.
    """
    p, n = partition.node_count, problem.n
    if n * p > GAMMA_LIMIT:
        raise InvalidParameterError(f"N*P = {n * p} exceeds the dense limit {GAMMA_LIMIT}")
    counts = np.asarray(partition.counts)
    period = lcm_period(counts)
    mu = np.broadcast_to(np.asarray(step_sizes, dtype=float), (p,))
    s = weights.s_matrix if use_adaptation_exchange else np.eye(p)
    a1, a2 = weights.a1_matrix, weights.a2_matrix
    eye_a1 = np.array_equal(a1, np.eye(p))
    eye_a2 = np.array_equal(a2, np.eye(p))

    g = np.eye(n * p)
    for it in range(1, period + 1):
        if not eye_a1:
            g = _right_mix(g, a1, p, n)
        rows = [partition.node_rows[k][it % counts[k]] for k in range(p)]
        u = problem.theta[rows]  # (P, N): u[l] = u_l(it)
        blocks = g.reshape(n * p, p, n)
        proj = np.einsum("ikj,lj->ikl", blocks, u)  # G_k u_l
        # G_k (I - mu_k sum_l alpha_{l,k} u_l u_l^T)
        coef = proj * (mu[:, None] * s.T)[None, :, :]
        blocks = blocks - np.einsum("ikl,lj->ikj", coef, u)
        g = blocks.reshape(n * p, n * p)
        if not eye_a2:
            g = _right_mix(g, a2, p, n)
    lam = np.linalg.eigvals(g)
    moduli = np.sort(np.abs(lam))[::-1]
    return GammaProduct(matrix=g, period=period, eigen_moduli=moduli, eigenvalues=lam)


def check_prop1(gamma, n, m):
    """True when the (N - M + 1)-th largest eigenvalue modulus is below one."""
    return gamma.modulus_at(n - m + 1) < 1.0


# ---------------------------------------------------------------------------
# mean-square matrix F

def tk_kron_sum(s):
    """sum_k T_k kron T_k with T_k = diag(column k of S)."""
    p = s.shape[0]
    return sum(np.kron(np.diag(s[:, k]), np.diag(s[:, k])) for k in range(p))


def zeta(s):
    """Largest entry of S S^T, i.e. of diag(sum_k T_k kron T_k); equals max(S^T S) for symmetric S."""
    return float((s @ s.T).max())


def build_F_general(a1, s, a2, mu, n, m):
    """F = (A1 kron A1)[(I - GD/M) kron (I - GD/M) + (N+1)/M^2 sum_k T_k D kron T_k D](A2 kron A2)."""
    p = s.shape[0]
    d = np.diag(np.broadcast_to(np.asarray(mu, dtype=float), (p,)))
    g = np.diag(s.sum(axis=0))
    mean_part = np.eye(p) - g @ d / m
    inner = np.kron(mean_part, mean_part)
    for k in range(p):
        tkd = np.diag(s[:, k]) @ d
        inner += (n + 1) / m ** 2 * np.kron(tkd, tkd)
    return np.kron(a1, a1) @ inner @ np.kron(a2, a2)


def build_F(a2, s, mu, n, m):
    """F for a shared step size, doubly stochastic S and A1 = I (ATC)."""
    p = s.shape[0]
    if not is_doubly_stochastic(s):
        warnings.warn("S is not doubly stochastic; the step-size bracket does not apply")
    diag = (1 - mu / m) ** 2 + (n + 1) / m ** 2 * mu ** 2 * np.diag(tk_kron_sum(s))
    return diag[:, None] * np.kron(a2, a2)


def build_F_full(a1, s, a2, mu, n, m):
    """The (NP)^2 x (NP)^2 matrix before Kronecker reduction; only for tiny N and P."""
    p = s.shape[0]
    if (n * p) ** 2 > 900:
        raise InvalidParameterError("full F is only built for N, P <= 3")
    eye = np.eye(n)
    big = lambda x: np.kron(x, eye)
    d = np.diag(np.broadcast_to(np.asarray(mu, dtype=float), (p,)))
    g = np.diag(s.sum(axis=0))
    mean_part = np.eye(n * p) - big(g) @ big(d) / m
    inner = np.kron(mean_part, mean_part)
    for k in range(p):
        tkd = big(np.diag(s[:, k])) @ big(d)
        inner += (n + 1) / m ** 2 * np.kron(tkd, tkd)
    return np.kron(big(a1), big(a1)) @ inner @ np.kron(big(a2), big(a2))


def rho_f(a2, s, mu, n, m):
    return spectral_radius(build_F(a2, s, mu, n, m))


def mu_bracket(s, n, m, p=None):
    """(2M / ((N+1) zeta + 1), 2PM / (P + N + 1))."""
    p = s.shape[0] if p is None else p
    return 2 * m / ((n + 1) * zeta(s) + 1), 2 * p * m / (p + n + 1)


@dataclass
class MuSearch:
    value: float
    rho: float
    bracket: tuple
    converged: bool
    evaluations: int


def mu_exact(a2, s, n, m, p=None, tol=1e-10):
    """Largest shared step size with rho(F) < 1, by bisection inside the analytic bracket."""
    lower, upper = mu_bracket(s, n, m, p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        f = lambda mu: rho_f(a2, s, mu, n, m)
        evals = 1
        r_lo = f(lower)
        if r_lo >= 1 - tol:
            return MuSearch(lower, r_lo, (lower, upper), abs(r_lo - 1) <= tol, evals)
        lo, hi = lower, upper * (1 + 1e-9)
        r_hi = f(hi)
        evals += 1
        if r_hi < 1:
            return MuSearch(upper, r_hi, (lower, upper), False, evals)
        r = r_lo
        while hi - lo > 1e-15 * upper:
            mid = 0.5 * (lo + hi)
            r_mid = f(mid)
            evals += 1
            if r_mid < 1:
                lo, r = mid, r_mid
                if 1 - r_mid <= tol:
                    break
            else:
                hi = mid
    return MuSearch(lo, r, (lower, upper), abs(r - 1) <= tol, evals)


def rho_profile(a2, s, n, m, mus):
    return np.array([rho_f(a2, s, mu, n, m) for mu in mus])


def is_unimodal(values, slack=1e-12):
    """Non-increasing then non-decreasing, up to ``slack``."""
    d = np.diff(values)
    turn = np.argmax(d > slack) if np.any(d > slack) else len(d)
    return bool(np.all(d[turn:] >= -slack))


# ---------------------------------------------------------------------------
# report

@dataclass
class StabilityReport:
    n: int
    m: int
    p: int
    zeta: float
    mu_lower: float
    mu_upper: float
    mu_exact: float
    mu_exact_converged: bool
    doubly_stochastic: bool
    rho_f: float = float("nan")  # at the first tested mu
    verdicts: list = field(default_factory=list)  # (mu, rho_F, stable)
    gamma: list = field(default_factory=list)  # (mu, |lambda_{N-M+1}|, stable)

    def records(self):
        rec = {"N": self.n, "M": self.m, "P": self.p, "zeta": self.zeta,
               "mu_lower": self.mu_lower, "mu_upper": self.mu_upper,
               "mu_exact": self.mu_exact, "mu_exact_converged": self.mu_exact_converged,
               "doubly_stochastic": self.doubly_stochastic, "rho_F": self.rho_f}
        for mu, rho, ok in self.verdicts:
            rec[f"rho_F[mu={mu:g}]"] = rho
            rec[f"stable_F[mu={mu:g}]"] = ok
        for mu, mod, ok in self.gamma:
            rec[f"gamma_modulus[mu={mu:g}]"] = mod
            rec[f"stable_gamma[mu={mu:g}]"] = ok
        return rec

    def to_text(self):
        return "".join(f"{k}: {_fmt(v)}\n" for k, v in self.records().items())


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def stability_report(a2, s, n, m, mus=(), gamma_inputs=None):
    """Bracket, exact limit and per-mu verdicts.

    ``gamma_inputs`` is an optional ``(problem, partition, weights)`` tuple; when
    given, the deterministic period test is evaluated at every mu as well.
    """
    p = s.shape[0]
    lower, upper = mu_bracket(s, n, m)
    search = mu_exact(a2, s, n, m)
    rep = StabilityReport(n=n, m=m, p=p, zeta=zeta(s), mu_lower=lower, mu_upper=upper,
                          mu_exact=search.value, mu_exact_converged=search.converged,
                          doubly_stochastic=bool(is_doubly_stochastic(s)))
    for mu in mus:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rho = rho_f(a2, s, mu, n, m)
        rep.verdicts.append((float(mu), rho, rho < 1))
        if len(rep.verdicts) == 1:
            rep.rho_f = rho
        if gamma_inputs is not None:
            problem, partition, weights = gamma_inputs
            gam = build_gamma(problem, partition, weights, mu)
            mod = gam.modulus_at(n - m + 1)
            rep.gamma.append((float(mu), mod, mod < 1))
    return rep


# ---------------------------------------------------------------------------
# Kronecker spectral-radius inequalities

@dataclass
class TheoremReport:
    name: str
    trials: int
    violations: int
    max_violation: float
    tolerance: float

    @property
    def passed(self):
        return self.violations == 0


def _kron_sum(bs):
    return sum(np.kron(b, b) for b in bs)


def _draw(rng, max_t, max_l):
    t = int(rng.integers(1, max_t + 1))
    l = int(rng.integers(1, max_l + 1))
    return [rng.standard_normal((l, l)) for _ in range(t)]


def verify_theorem1(trials=100, seed=0, max_t=4, max_l=4, tol=1e-10):
    """rho(B_1 kron B_1) <= rho(sum_k B_k kron B_k)."""
    rng = substream(seed, "theorem", 1)
    worst, bad = -np.inf, 0
    for _ in range(trials):
        bs = _draw(rng, max_t, max_l)
        gap = spectral_radius(np.kron(bs[0], bs[0])) - spectral_radius(_kron_sum(bs))
        worst = max(worst, gap)
        bad += gap > tol
    return TheoremReport("theorem1", trials, int(bad), float(worst), tol)


def kron_identity_lift(bs, n):
    """sum_k (B_k kron I_N) kron (B_k kron I_N)."""
    eye = np.eye(n)
    return sum(np.kron(np.kron(b, eye), np.kron(b, eye)) for b in bs)


def verify_theorem2(trials=100, seed=0, max_t=3, max_l=3, dims=(1, 2, 3), tol=1e-8):
    """rho of the identity-lifted Kronecker sum equals rho of the plain one."""
    rng = substream(seed, "theorem", 2)
    worst, bad = 0.0, 0
    for _ in range(trials):
        bs = _draw(rng, max_t, max_l)
        n = int(rng.choice(dims))
        gap = abs(spectral_radius(kron_identity_lift(bs, n)) - spectral_radius(_kron_sum(bs)))
        worst = max(worst, gap)
        bad += gap > tol
    return TheoremReport("theorem2", trials, int(bad), float(worst), tol)


def theorem3_sides(bs, p, q):
    total = sum(bs)
    outer = np.kron(total, total)
    lhs = spectral_radius(p * outer + q * _kron_sum(bs))
    rhs = (p + q / len(bs)) * spectral_radius(outer)
    return lhs, rhs


def verify_theorem3(trials=100, seed=0, max_t=4, max_l=3, tol=1e-10):
    """rho(p X kron X + q sum B_k kron B_k) >= (p + q/t) rho(X kron X), X = sum B_k.

    Every fifth trial repeats a single matrix t times, where equality must hold.
    """
    rng = substream(seed, "theorem", 3)
    worst, bad = -np.inf, 0
    for trial in range(trials):
        bs = _draw(rng, max_t, max_l)
        if trial % 5 == 4:
            bs = [bs[0]] * len(bs)
        p, q = rng.uniform(0, 2, size=2)
        lhs, rhs = theorem3_sides(bs, p, q)
        shortfall = rhs - lhs
        if trial % 5 == 4:
            shortfall = abs(shortfall)
        worst = max(worst, shortfall)
        bad += shortfall > tol
    return TheoremReport("theorem3", trials, int(bad), float(worst), tol)
