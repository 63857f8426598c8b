"""Random graph samplers, node features and graph operators.

Graphs are simple and undirected. The adjacency is stored as a CSR matrix,
i.e. as sorted neighbour lists, and is never mutated after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .kernels import Kernel


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    adjacency: sp.csr_array
    latent: np.ndarray | None = None
    gamma: float | None = None

    def __post_init__(self):
        a = sp.csr_array(self.adjacency, dtype=np.float64)
        a.sum_duplicates()
        a.eliminate_zeros()
        a.sort_indices()
        if a.shape[0] != a.shape[1]:
            raise GraphError("adjacency must be square")
        if a.diagonal().any():
            raise GraphError("self-loops are not allowed")
        if (a != a.T).nnz:
            raise GraphError("adjacency must be symmetric")
        if a.nnz and not np.all(a.data == 1.0):
            raise GraphError("adjacency entries must be 0/1")
        object.__setattr__(self, "adjacency", a)
        if self.latent is not None:
            lat = np.asarray(self.latent, dtype=float)
            if lat.shape != (a.shape[0],):
                raise GraphError("one latent coordinate per node is required")
            if lat.size > 1 and np.any(np.diff(lat) <= 0):
                raise GraphError("latent coordinates must be strictly increasing")
            object.__setattr__(self, "latent", lat)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i] : a.indptr[i + 1]]

    def edges(self) -> np.ndarray:
        """Undirected edges ``(i, j)`` with ``i < j``, lexicographically sorted."""
        upper = sp.triu(self.adjacency, k=1, format="coo")
        order = np.lexsort((upper.col, upper.row))
        return np.column_stack([upper.row[order], upper.col[order]]).astype(np.int64)

    def dense(self) -> np.ndarray:
        return self.adjacency.toarray()

    def n_components(self) -> int:
        return int(connected_components(self.adjacency, directed=False)[0])


def from_edges(n: int, edges, latent=None, gamma=None) -> Graph:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise GraphError(f"edge endpoint out of range for n={n}")
    if np.any(edges[:, 0] == edges[:, 1]):
        raise GraphError("self-loops are not allowed")
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    a = sp.csr_array((np.ones(rows.size), (rows, cols)), shape=(n, n))
    a.sum_duplicates()
    a.data[:] = 1.0
    return Graph(a, latent, gamma)


def from_dense(a, latent=None, gamma=None) -> Graph:
    return Graph(sp.csr_array(np.asarray(a, dtype=float)), latent, gamma)


def make_rng(seed, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``, e.g. ``(master, trial)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def latent_grid(n: int, gamma: float) -> np.ndarray:
    """Arithmetic grid ``u_1 = -floor(n/2) gamma + gamma/2``, ``u_i = u_{i-1} + gamma``."""
    if n < 2:
        raise GraphError("need n >= 2")
    if gamma <= 0:
        raise GraphError("gamma must be positive")
    return -(n // 2) * gamma + gamma / 2 + gamma * np.arange(n)


def _bernoulli_upper(prob_upper, n, iu, ju, rng):
    hit = rng.random(prob_upper.size) < prob_upper
    return iu[hit], ju[hit]


def sample_dsgm(kernel: Kernel, n: int, gamma: float, seed) -> Graph:
    """Sample ``A_ij ~ Ber(W(u_i, u_j))`` independently for ``i < j`` on the latent grid."""
    u = latent_grid(n, gamma)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    probs = np.clip(kernel(u[iu], u[ju]), 0.0, 1.0)
    r, c = _bernoulli_upper(probs, n, iu, ju, rng)
    return from_edges(n, np.column_stack([r, c]), latent=u, gamma=gamma)


def expected_adjacency_dsgm(kernel: Kernel, n: int, gamma: float) -> np.ndarray:
    """``W(u_i, u_j)`` off the diagonal, zero on it."""
    u = latent_grid(n, gamma)
    p = kernel(u[:, None], u[None, :])
    np.fill_diagonal(p, 0.0)
    return p


def one_hot(labels, k=None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1 if k is None else k
    y = np.zeros((labels.size, k))
    y[np.arange(labels.size), labels] = 1.0
    return y


def check_assignment(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or not np.all((y == 0) | (y == 1)) or not np.all(y.sum(1) == 1):
        raise GraphError("community assignment rows must be one-hot")
    return y


def sbm_probabilities(y, b) -> np.ndarray:
    y = check_assignment(y)
    b = np.asarray(b, dtype=float)
    if b.shape != (y.shape[1], y.shape[1]):
        raise GraphError("block matrix shape does not match the number of communities")
    if not np.allclose(b, b.T, rtol=0, atol=0):
        raise GraphError("block matrix must be symmetric")
    if b.min() < 0 or b.max() > 1:
        raise GraphError("block probabilities must lie in [0, 1]")
    return y @ b @ y.T


def sample_sbm(y, b, seed) -> Graph:
    """Stochastic block model ``A ~ Ber(Y B Y^T)`` with a zero diagonal."""
    p = sbm_probabilities(y, b)
    n = p.shape[0]
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    r, c = _bernoulli_upper(p[iu, ju], n, iu, ju, rng)
    return from_edges(n, np.column_stack([r, c]))


def sample_gaussian_mixture_features(y, means, covariances, seed) -> np.ndarray:
    """Row ``i`` drawn from ``N(means[k], covariances[k])`` for node ``i`` in community ``k``."""
    y = check_assignment(y)
    labels = y.argmax(1)
    means = [np.asarray(m, dtype=float) for m in means]
    covs = [np.atleast_2d(np.asarray(c, dtype=float)) for c in covariances]
    if len(means) != y.shape[1] or len(covs) != y.shape[1]:
        raise GraphError("one mean and covariance per community is required")
    d = means[0].size
    factors = []
    for cov in covs:
        if cov.shape != (d, d) or not np.allclose(cov, cov.T):
            raise GraphError("covariances must be symmetric D x D matrices")
        vals, vecs = np.linalg.eigh(cov)
        if vals.min() < -1e-12 * max(1.0, vals.max()):
            raise GraphError("covariance is not positive semidefinite")
        factors.append(vecs * np.sqrt(np.clip(vals, 0, None)))
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    z = rng.standard_normal((labels.size, d))
    x = np.empty((labels.size, d))
    for k in range(y.shape[1]):
        rows = labels == k
        x[rows] = means[k] + z[rows] @ factors[k].T
    return x


def normalized_adjacency(graph: Graph) -> sp.csr_array:
    """``D^-1/2 A D^-1/2``; isolated nodes get zero rows and columns."""
    deg = graph.degrees.astype(float)
    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    d = sp.diags_array(inv)
    return sp.csr_array(d @ graph.adjacency @ d)


def graph_operator(graph: Graph, kind: str) -> sp.csr_array:
    if kind in ("adj", "adjacency"):
        return graph.adjacency.copy()
    if kind in ("norm", "normalized", "normalized-adjacency"):
        return normalized_adjacency(graph)
    raise GraphError(f"unknown operator {kind!r}")


def drop_edges(graph: Graph, fraction: float, seed) -> Graph:
    """Remove exactly ``round(fraction * m)`` undirected edges chosen uniformly."""
    if not 0.0 <= fraction <= 1.0:
        raise GraphError("fraction must lie in [0, 1]")
    edges = graph.edges()
    n_drop = int(round(fraction * len(edges)))
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    keep = np.ones(len(edges), dtype=bool)
    keep[rng.choice(len(edges), size=n_drop, replace=False)] = False
    return from_edges(graph.n, edges[keep], graph.latent, graph.gamma)


@dataclass(frozen=True)
class DegreeSummary:
    mean: float
    min: int
    max: int
    isolated: int


def degree_summary(graph: Graph) -> DegreeSummary:
    deg = graph.degrees
    return DegreeSummary(float(deg.mean()), int(deg.min()), int(deg.max()), int(np.sum(deg == 0)))


def read_edge_list(path, n: int | None = None) -> Graph:
    """Read ``i j`` pairs (0-based). Blank lines and ``#`` comments are skipped.

    ``n`` defaults to the ``# n=<count>`` header written by
    :func:`write_edge_list`, else to one more than the largest node id.
    """
    edges = []
    header_n = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.startswith("# n=") and header_n is None:
                header_n = int(line[4:].split()[0])
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected two node ids, got {line!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphError(f"{path}:{lineno}: node ids must be integers") from None
            if i < 0 or j < 0:
                raise GraphError(f"{path}:{lineno}: negative node id")
            if i != j:
                edges.append((min(i, j), max(i, j)))
    arr = np.array(sorted(set(edges)), dtype=np.int64).reshape(-1, 2)
    n = header_n if n is None else n
    size = (int(arr.max()) + 1 if arr.size else 0) if n is None else n
    if arr.size and arr.max() >= size:
        raise GraphError(f"{path}: node id {int(arr.max())} out of range for n={size}")
    return from_edges(size, arr)


def write_edge_list(graph: Graph, path) -> None:
    path = Path(path)
    lines = [f"# n={graph.n} m={graph.n_edges}"]
    lines += [f"{i} {j}" for i, j in graph.edges()]
    path.write_text("\n".join(lines) + "\n")
