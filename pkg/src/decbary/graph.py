"""Communication topologies, their Laplacians and consensus measurements.

The stacked communication matrix ``W = Wbar (x) I_n`` is never formed; every
operation here acts on the m x m Laplacian and applies it block-wise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

KINDS = ("complete", "cycle", "star", "erdos_renyi")

# dense eigensolve up to this size, Lanczos beyond
DENSE_EIG_LIMIT = 2000
ER_MAX_RETRIES = 1000


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    """Undirected simple graph on agents ``0..m-1``.

    Edges are stored as sorted ``(i, j)`` pairs with ``i < j``. Connectivity
    is checked at construction; ``m == 1`` with no edges is accepted as a
    degenerate single-agent network.
    """

    m: int
    edges: frozenset[tuple[int, int]]
    _adj: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 1:
            raise GraphError(f"m must be positive, got {self.m}")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise GraphError(f"edge ({i}, {j}) out of range for m={self.m}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        adj = [[] for _ in range(self.m)]
        for i, j in norm:
            adj[i].append(j)
            adj[j].append(i)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))
        if not _is_connected(self.m, norm):
            raise GraphError("graph is not connected")

    def neighbors(self, i: int) -> list[int]:
        if not 0 <= i < self.m:
            raise IndexError(f"agent index {i} out of range for m={self.m}")
        return list(self._adj[i])

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def _is_connected(m: int, edges) -> bool:
    if m == 1:
        return True
    if not edges:
        return False
    rows, cols = zip(*edges)
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
    ncomp, _ = connected_components(adj, directed=False)
    return ncomp == 1


def default_er_probability(m: int) -> float:
    """Edge probability ``2 ln(m) / m``, clipped to 1."""
    return min(1.0, 2.0 * math.log(m) / m) if m > 1 else 1.0


def build(kind: str, m: int, p: float | None = None, seed: int = 0) -> Topology:
    """Build a connected topology of a named family.

    Parameters
    ----------
    kind : {"complete", "cycle", "star", "erdos_renyi"}
    m : int
        Number of agents, at least 2.
    p : float, optional
        Erdos-Renyi edge probability. Defaults to ``2 ln(m)/m``.
    seed : int
        Erdos-Renyi seed. Disconnected draws are retried with ``seed + 1``,
        ``seed + 2``, ... up to ``ER_MAX_RETRIES`` times.

    The star hub is node 0; the cycle visits nodes in index order.
    """
    if m < 2:
        raise GraphError(f"m must be at least 2, got {m}")
    if kind == "complete":
        edges = {(i, j) for i in range(m) for j in range(i + 1, m)}
    elif kind == "cycle":
        edges = {(i, (i + 1) % m) for i in range(m)}
    elif kind == "star":
        edges = {(0, j) for j in range(1, m)}
    elif kind == "erdos_renyi":
        if p is None:
            p = default_er_probability(m)
        if not 0 < p <= 1:
            raise GraphError(f"edge probability must be in (0, 1], got {p}")
        for attempt in range(ER_MAX_RETRIES):
            rng = np.random.default_rng(seed + attempt)
            mask = np.triu(rng.random((m, m)) < p, k=1)
            edges = {(int(i), int(j)) for i, j in zip(*np.nonzero(mask))}
            if _is_connected(m, edges):
                break
        else:
            raise GraphError(
                f"no connected Erdos-Renyi graph with m={m}, p={p} "
                f"after {ER_MAX_RETRIES} retries"
            )
    else:
        raise GraphError(f"unknown topology kind {kind!r}; expected one of {KINDS}")
    return Topology(m, frozenset(edges))


def laplacian(t: Topology) -> np.ndarray:
    """Dense ``m x m`` graph Laplacian (degree minus adjacency)."""
    lap = np.zeros((t.m, t.m), dtype=np.int64)
    for i, j in t.edges:
        lap[i, j] = lap[j, i] = -1
        lap[i, i] += 1
        lap[j, j] += 1
    return lap.astype(float)


def lambda_max(lap: np.ndarray) -> float:
    """Largest Laplacian eigenvalue; equals that of ``lap (x) I_n``."""
    m = lap.shape[0]
    if m <= DENSE_EIG_LIMIT:
        return float(np.linalg.eigvalsh(lap)[-1])
    try:
        vals = eigsh(csr_matrix(lap), k=1, which="LA", tol=1e-12, maxiter=20 * m,
                     return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise GraphError("largest eigenvalue did not converge") from exc
    return float(vals[0])


def _blocks(p, m: int) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 1:
        if arr.size % m:
            raise ValueError(f"stacked vector of length {arr.size} not divisible into {m} blocks")
        arr = arr.reshape(m, -1)
    if arr.ndim != 2 or arr.shape[0] != m:
        raise ValueError(f"expected {m} blocks, got array of shape {arr.shape}")
    return arr


def consensus_norm(t: Topology, p) -> float:
    """Distance to consensus ``sqrt(p^T W p)``.

    Evaluated as ``sqrt(sum over edges ||p_i - p_j||^2)``. ``p`` may be an
    ``(m, n)`` array or a flat stacked vector of ``m`` equal blocks.
    """
    blocks = _blocks(p, t.m)
    if not t.edges:
        return 0.0
    i, j = np.array(t.sorted_edges()).T
    diff = blocks[i] - blocks[j]
    return float(math.sqrt(np.sum(diff * diff)))


def apply_laplacian(lap: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """Block-wise product ``(Wbar (x) I_n) p`` for ``p`` given as ``(m, n)``."""
    return lap @ blocks


def rounds_for_accuracy(lmax: float, R: float, epsilon: float, gamma: float) -> int:
    """Iteration count ``ceil(sqrt(32 lmax R^2 / (epsilon gamma)))`` of the
    accelerated barycenter method."""
    if min(lmax, R, epsilon, gamma) <= 0:
        raise ValueError("lmax, R, epsilon and gamma must be positive")
    return math.ceil(math.sqrt(32.0 * lmax * R * R / (epsilon * gamma)))


def write_edgelist(t: Topology, path) -> None:
    lines = [str(t.m)] + [f"{i} {j}" for i, j in t.sorted_edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path) -> Topology:
    """Parse the edge-list format: first line ``m``, then one ``i j`` per line."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 1:
        raise GraphError(f"{path}: first line must hold the agent count")
    m = int(rows[0][0])
    edges = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise GraphError(f"{path}:{lineno}: expected 'i j', got {' '.join(row)!r}")
        i, j = int(row[0]), int(row[1])
        key = (min(i, j), max(i, j))
        if key in edges:
            raise GraphError(f"{path}:{lineno}: duplicate edge {key}")
        edges.add(key)
    return Topology(m, frozenset(edges))
