"""Zero attraction, thresholded sparsity and the sparsity-window stop rule."""

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidParameterError

GUARD_RATIO = 1.5
GUARD_GATE_FRACTION = 0.02
STOP_FRACTION = 0.8


@dataclass(frozen=True)
class RegularizerParams:
    xi: float = 5e-6
    delta: float = 10.0
    tau: float = 1e-3
    window: int = 200
    band: int = 20

    def __post_init__(self):
        if self.xi < 0:
            raise InvalidParameterError("xi must be nonnegative")
        if self.delta <= 0 or self.tau <= 0:
            raise InvalidParameterError("delta and tau must be positive")
        if self.window < 1 or self.band < 0:
            raise InvalidParameterError("window must be >= 1 and band >= 0")

    @classmethod
    def for_dimension(cls, n, **overrides):
        """Defaults with the window set to 0.2 N."""
        overrides.setdefault("window", max(1, int(round(0.2 * n))))
        return cls(**overrides)


@numba.njit(cache=True)
def _zero_attraction(flat, delta, out):
    reach = 1.0 / delta
    d2 = delta * delta
    for i in range(flat.size):
        v = flat[i]
        if 0.0 < v <= reach:
            out[i] = d2 * v - delta
        elif -reach <= v < 0.0:
            out[i] = d2 * v + delta
        else:
            out[i] = 0.0


@numba.njit(cache=True)
def add_attraction(phi, scale, delta, out):
    """out[k] = (phi[k] + out[k]) + scale[k] * z(phi[k]) for 2-D (P, N) arrays, in place.

    The grouping follows the update formula read left to right, so a single node
    rounds exactly like the textbook recursion.
    """
    reach = 1.0 / delta
    d2 = delta * delta
    p, n = phi.shape
    for k in range(p):
        c = scale[k]
        for j in range(n):
            v = phi[k, j]
            # branch-free select; near-zero iterates have random signs
            inside = 1.0 if (abs(v) <= reach) & (v != 0.0) else 0.0
            out[k, j] = (v + out[k, j]) + c * inside * (d2 * v - math.copysign(delta, v))


def zero_attraction(w, delta):
    """Piecewise-linear surrogate for -grad ||w||_0.

    ``delta^2 w + delta`` on [-1/delta, 0), ``delta^2 w - delta`` on (0, 1/delta],
    zero elsewhere (including w == 0).
    """
    w = np.ascontiguousarray(w, dtype=float)
    out = np.empty_like(w)
    _zero_attraction(w.reshape(-1), float(delta), out.reshape(-1))
    return out


def sparsity(w, tau):
    """Number of entries with magnitude strictly above tau."""
    return int(np.count_nonzero(np.abs(w) > tau))


def sparsity_rows(w, tau):
    return np.count_nonzero(np.abs(w) > tau, axis=-1)


def stop_check(history, window, band):
    """True once more than 80% of the last ``window`` sparsities sit in [s_min, s_min + band]."""
    if len(history) < window:
        return False
    recent = np.fromiter(history, dtype=float)[-window:]
    s_min = recent.min()
    count = np.count_nonzero(recent <= s_min + band)
    return bool(count > STOP_FRACTION * window)


def guard_gate(n):
    return math.ceil(GUARD_GATE_FRACTION * n)


def guard_rejects(prev_s, next_s, iteration, n):
    return iteration > guard_gate(n) and (next_s - prev_s) > GUARD_RATIO * prev_s


def sparsity_guard(prev_w, next_w, tau, iteration, n):
    """Keep ``prev_w`` when the sparsity count jumps by more than 1.5x after the warm-up gate."""
    prev_w = np.asarray(prev_w)
    next_w = np.asarray(next_w)
    if prev_w.shape != next_w.shape:
        raise InvalidParameterError("vectors differ in shape")
    if guard_rejects(sparsity(prev_w, tau), sparsity(next_w, tau), iteration, n):
        return prev_w
    return next_w
