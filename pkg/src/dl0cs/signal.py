"""Sparse signals, Gaussian measurement ensembles and row partitions."""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .seeding import substream

MAGIC = b"DCS1"
_HEADER = struct.Struct("<4sQQQdQ")


@dataclass(frozen=True)
class SparseSignal:
    dim: int
    support: np.ndarray
    values: np.ndarray
    raw_values: np.ndarray = field(repr=False)

    @property
    def sparsity(self):
        return len(self.support)

    def dense(self):
        x = np.zeros(self.dim)
        x[self.support] = self.values
        return x


@dataclass(frozen=True)
class ProblemInstance:
    signal: SparseSignal
    theta: np.ndarray
    observations: np.ndarray
    noise: np.ndarray
    noise_sigma: float
    rng_seed: int

    @property
    def n(self):
        return self.theta.shape[1]

    @property
    def m(self):
        return self.theta.shape[0]

    @property
    def x(self):
        return self.signal.dense()


@dataclass(frozen=True)
class Partition:
    node_rows: tuple
    counts: np.ndarray

    @property
    def node_count(self):
        return len(self.node_rows)


def generate_sparse_signal(n, k, seed):
    """Random K-sparse unit-norm vector.

    Support is drawn without replacement; raw amplitudes are uniform on
    [-1, -0.2] U [0.2, 1] before the whole vector is normalised.
    """
    if not 0 < k <= n:
        raise InvalidParameterError(f"need 0 < k <= n, got k={k}, n={n}")
    rng = substream(seed, "signal")
    support = np.sort(rng.choice(n, size=k, replace=False))
    magnitude = rng.uniform(0.2, 1.0, size=k)
    sign = np.where(rng.random(k) < 0.5, -1.0, 1.0)
    raw = sign * magnitude
    values = raw / np.linalg.norm(raw)
    return SparseSignal(dim=n, support=support, values=values, raw_values=raw)


def generate_measurements(x, m, sigma, seed):
    """Gaussian Theta with entry variance 1/m and noise covariance (sigma^2/m) I."""
    n = x.dim
    if m >= n or m < 1:
        raise InvalidParameterError(f"need 1 <= m < n, got m={m}, n={n}")
    if sigma < 0:
        raise InvalidParameterError("sigma must be nonnegative")
    scale = 1.0 / np.sqrt(m)
    theta = substream(seed, "matrix").standard_normal((m, n)) * scale
    v = substream(seed, "noise").standard_normal(m) * (sigma * scale)
    clean = theta @ x.dense()
    y = clean + v
    # store the realised noise so that y - theta x reproduces it bit for bit
    noise = y - clean
    return ProblemInstance(signal=x, theta=theta, observations=y, noise=noise,
                           noise_sigma=float(sigma), rng_seed=int(seed))


def make_instance(n, m, k, sigma, seed):
    return generate_measurements(generate_sparse_signal(n, k, seed), m, sigma, seed)


def partition_uniform(instance, p):
    """Contiguous, balanced row blocks; the first M mod p nodes get one extra row."""
    m = instance.m if isinstance(instance, ProblemInstance) else int(instance)
    if not 1 <= p <= m:
        raise InvalidParameterError(f"need 1 <= p <= M, got p={p}, M={m}")
    base, extra = divmod(m, p)
    counts = np.array([base + (1 if k < extra else 0) for k in range(p)])
    bounds = np.concatenate([[0], np.cumsum(counts)])
    rows = tuple(np.arange(bounds[k], bounds[k + 1]) for k in range(p))
    return Partition(node_rows=rows, counts=counts)


def local_index(count, iteration):
    """0-based local row used at a 1-based iteration (data recycling)."""
    return iteration % count


def data_at(instance, partition, node, iteration):
    if not 0 <= node < partition.node_count:
        raise InvalidParameterError(f"node {node} out of range")
    if iteration < 1:
        raise InvalidParameterError("iterations are 1-based")
    rows = partition.node_rows[node]
    row = rows[local_index(len(rows), iteration)]
    return instance.theta[row], instance.observations[row]


def dump_instance(instance, path):
    sig = instance.signal
    header = _HEADER.pack(MAGIC, instance.n, instance.m, sig.sparsity,
                          instance.noise_sigma, instance.rng_seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(instance.theta, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(sig.dense(), dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(instance.observations, dtype="<f8").tobytes())


def load_instance(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, n, m, k, sigma, seed = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise InvalidParameterError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if body.size != m * n + n + m:
        raise InvalidParameterError(f"{path}: truncated payload")
    theta = body[: m * n].reshape(m, n).astype(np.float64)
    x = body[m * n: m * n + n].astype(np.float64)
    y = body[m * n + n:].astype(np.float64)
    support = np.flatnonzero(x)
    if len(support) != k:
        raise InvalidParameterError(f"{path}: header says K={k}, payload has {len(support)}")
    signal = SparseSignal(dim=n, support=support, values=x[support],
                          raw_values=x[support].copy())
    noise = y - theta @ x
    return ProblemInstance(signal=signal, theta=theta, observations=y, noise=noise,
                           noise_sigma=sigma, rng_seed=seed)
