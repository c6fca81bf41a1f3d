"""Network topologies and diffusion weight matrices.

Weight matrices follow the column convention: entry ``(l, k)`` is the weight
node ``k`` gives to information coming from node ``l``.  Adaptation matrices
are row stochastic (``S 1 = 1``), combination matrices column stochastic
(``A^T 1 = 1``).
"""

import io
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .seeding import substream


@dataclass(frozen=True)
class NetworkTopology:
    adjacency: np.ndarray  # symmetric bool, diagonal True

    @property
    def node_count(self):
        return self.adjacency.shape[0]

    @property
    def neighborhoods(self):
        return [tuple(np.flatnonzero(row)) for row in self.adjacency]

    @property
    def degrees(self):
        """|N_k|, counting the node itself."""
        return self.adjacency.sum(axis=1)

    def edge_count(self):
        return int((self.adjacency.sum() - self.node_count) // 2)

    def is_connected(self):
        seen = {0}
        queue = deque([0])
        while queue:
            k = queue.popleft()
            for l in np.flatnonzero(self.adjacency[k]):
                if l not in seen:
                    seen.add(int(l))
                    queue.append(int(l))
        return len(seen) == self.node_count


@dataclass(frozen=True)
class WeightMatrices:
    s_matrix: np.ndarray
    a1_matrix: np.ndarray
    a2_matrix: np.ndarray

    @property
    def node_count(self):
        return self.s_matrix.shape[0]

    @classmethod
    def for_variant(cls, variant, s, a):
        """Place the combination matrix where an ATC or CTA recursion expects it."""
        eye = np.eye(s.shape[0])
        v = variant.upper()
        if v in ("ATC", "MB-ATC"):
            return cls(s, eye, a)
        if v in ("CTA", "MB-CTA"):
            return cls(s, a, eye)
        raise InvalidParameterError(f"use the constructor directly for variant {variant!r}")


def topology_from_adjacency(adj):
    adj = np.asarray(adj, dtype=bool).copy()
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise InvalidParameterError("adjacency must be square")
    np.fill_diagonal(adj, True)
    if not np.array_equal(adj, adj.T):
        raise InvalidParameterError("adjacency must be symmetric")
    topo = NetworkTopology(adj)
    if not topo.is_connected():
        raise InvalidParameterError("graph is not connected")
    return topo


def complete_graph(p):
    return topology_from_adjacency(np.ones((p, p), dtype=bool))


def path_graph(p):
    adj = np.eye(p, dtype=bool)
    for k in range(p - 1):
        adj[k, k + 1] = adj[k + 1, k] = True
    return topology_from_adjacency(adj)


def grow_network(p_count, p_links, seed):
    """Recursively grown network T_p.

    Starts from a complete graph on ``p_links + 1`` nodes; every further node
    attaches to ``p_links`` distinct existing nodes chosen uniformly.
    """
    if p_links < 1 or p_count <= p_links:
        raise InvalidParameterError(f"need p_links >= 1 and p_count > p_links "
                                    f"(got {p_count}, {p_links})")
    rng = substream(seed, "topology")
    adj = np.zeros((p_count, p_count), dtype=bool)
    core = p_links + 1
    adj[:core, :core] = True
    for new in range(core, p_count):
        targets = rng.choice(new, size=p_links, replace=False)
        adj[new, targets] = adj[targets, new] = True
    return topology_from_adjacency(adj)


def metropolis_weights(topology):
    """Symmetric doubly stochastic adaptation weights, 1/max(|N_k|, |N_l|) off the diagonal."""
    adj = topology.adjacency
    n = topology.degrees.astype(float)
    s = np.where(adj, 1.0 / np.maximum(n[:, None], n[None, :]), 0.0)
    np.fill_diagonal(s, 0.0)
    np.fill_diagonal(s, 1.0 - s.sum(axis=0))
    return s


def averaging_weights(topology):
    """Column k holds 1/|N_k| on the neighbourhood of k."""
    adj = topology.adjacency
    return adj / topology.degrees[None, :].astype(float)


def uniform_weights(p):
    return np.full((p, p), 1.0 / p)


@dataclass
class ConstraintCheck:
    name: str
    passed: bool
    violation: float


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        return "\n".join(f"{c.name}: {'pass' if c.passed else 'FAIL'} "
                         f"(max violation {c.violation:.3e})" for c in self.checks)


def validate_weights(w, topology, tol=1e-12):
    p = topology.node_count
    mats = {"S": w.s_matrix, "A1": w.a1_matrix, "A2": w.a2_matrix}
    for name, mat in mats.items():
        if mat.shape != (p, p):
            raise InvalidParameterError(f"{name} has shape {mat.shape}, expected {(p, p)}")
    off_pattern = ~topology.adjacency
    checks = []

    def add(name, violation):
        checks.append(ConstraintCheck(name, bool(violation <= tol), float(violation)))

    add("S rows sum to one", np.abs(w.s_matrix.sum(axis=1) - 1).max())
    add("A1 columns sum to one", np.abs(w.a1_matrix.sum(axis=0) - 1).max())
    add("A2 columns sum to one", np.abs(w.a2_matrix.sum(axis=0) - 1).max())
    for name, mat in mats.items():
        add(f"{name} nonnegative", max(0.0, -mat.min()))
        leak = np.abs(mat[off_pattern]).max() if off_pattern.any() else 0.0
        add(f"{name} supported on neighbourhoods", leak)
    return ValidationReport(checks)


def is_doubly_stochastic(mat, tol=1e-12):
    return (mat.min() >= -tol
            and np.abs(mat.sum(axis=0) - 1).max() <= tol
            and np.abs(mat.sum(axis=1) - 1).max() <= tol)


def format_adjacency_list(topology):
    return "".join(" ".join(str(i) for i in [k] + [l for l in nbrs if l != k]) + "\n"
                   for k, nbrs in enumerate(topology.neighborhoods))


def parse_adjacency_list(text):
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    p = len(lines)
    adj = np.zeros((p, p), dtype=bool)
    for parts in lines:
        k = int(parts[0])
        for l in parts[1:]:
            adj[k, int(l)] = True
    return topology_from_adjacency(adj)


def format_matrix_csv(mat):
    buf = io.StringIO()
    np.savetxt(buf, mat, delimiter=",", fmt="%.17g")
    return buf.getvalue()


def parse_matrix_csv(text):
    return np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2)
