"""
Interaction topologies and the spectral objects derived from them.

Agents are indexed from 0 internally; the scenario layer converts from the
1-based indices users write.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Undirected graph on ``n`` agents.

    ``edge_list`` holds each undirected edge once as ``(i, j)`` with
    ``i < j``; the tail of every edge is its smaller endpoint.
    """

    n: int
    edge_list: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        if n < 0:
            raise GraphError(f"agent count must be nonnegative, got {n}")
        adj = np.zeros((n, n), dtype=np.int8)
        for i, j in edges:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) references an agent outside 0..{n - 1}")
            if i == j:
                raise GraphError(f"self-loop on agent {i}")
            adj[i, j] = adj[j, i] = 1
        return cls._from_adjacency(adj)

    @classmethod
    def from_adjacency(cls, adjacency) -> "Graph":
        adj = np.asarray(adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise GraphError("adjacency must be square")
        if not np.array_equal(adj, adj.T):
            raise GraphError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise GraphError("adjacency must have a zero diagonal")
        return cls._from_adjacency((adj != 0).astype(np.int8))

    @classmethod
    def _from_adjacency(cls, adj: np.ndarray) -> "Graph":
        iu, ju = np.nonzero(np.triu(adj, 1))
        edges = tuple((int(i), int(j)) for i, j in zip(iu, ju))
        adj = adj.copy()
        adj.setflags(write=False)
        return cls(n=adj.shape[0], edge_list=edges, adjacency=adj)

    @property
    def num_edges(self) -> int:
        return len(self.edge_list)

    @cached_property
    def _edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.edge_list:
            return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
        arr = np.asarray(self.edge_list, dtype=np.intp)
        tails, heads = np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1])
        tails.setflags(write=False)
        heads.setflags(write=False)
        return tails, heads

    def tails_heads(self) -> tuple[np.ndarray, np.ndarray]:
        """Tail and head index arrays in edge-list order (read-only, cached)."""
        return self._edge_arrays

    @cached_property
    def pair_indices(self) -> np.ndarray:
        """Upper-triangle pair index of every edge, in edge-list order."""
        t, h = self._edge_arrays
        return t * self.n - t * (t + 1) // 2 + (h - t - 1)

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]

    def relabel(self, perm) -> "Graph":
        """Graph in which old agent ``k`` becomes agent ``perm[k]``."""
        perm = np.asarray(perm)
        return Graph.from_edges(self.n, [(perm[i], perm[j]) for i, j in self.edge_list])


def ring(n: int) -> Graph:
    if n < 3:
        return path(n)
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def complete(n: int) -> Graph:
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def empty(n: int) -> Graph:
    return Graph.from_edges(n, [])


class EdgeGains:
    """One nonnegative gain per undirected edge, keyed by ``(min, max)``."""

    def __init__(self, beta: Mapping[tuple[int, int], float]):
        gains = {}
        for (i, j), b in beta.items():
            key = (min(i, j), max(i, j))
            b = float(b)
            if b < 0 or not np.isfinite(b):
                raise ValueError(f"edge gain on {key} must be finite and nonnegative, got {b}")
            if key in gains and gains[key] != b:
                raise ValueError(f"conflicting gains for edge {key}")
            gains[key] = b
        self._beta = gains

    @classmethod
    def uniform(cls, g: Graph, value: float) -> "EdgeGains":
        return cls({e: value for e in g.edge_list})

    def __getitem__(self, edge: tuple[int, int]) -> float:
        i, j = edge
        return self._beta[(min(i, j), max(i, j))]

    def __contains__(self, edge) -> bool:
        i, j = edge
        return (min(i, j), max(i, j)) in self._beta

    def as_array(self, g: Graph) -> np.ndarray:
        missing = [e for e in g.edge_list if e not in self._beta]
        if missing:
            raise GraphError(f"no gain given for edges {missing}")
        return np.array([self._beta[e] for e in g.edge_list], dtype=float)

    def items(self):
        return self._beta.items()


def laplacian(g: Graph) -> np.ndarray:
    A = g.adjacency.astype(float)
    return np.diag(A.sum(axis=1)) - A


def incidence(g: Graph) -> np.ndarray:
    """Incidence matrix: column ``k`` is -1 at the tail, +1 at the head."""
    D = np.zeros((g.n, g.num_edges))
    for k, (i, j) in enumerate(g.edge_list):
        D[i, k] = -1.0
        D[j, k] = 1.0
    return D


def weighted_incidence(g: Graph, gains: EdgeGains) -> tuple[np.ndarray, np.ndarray]:
    """Gain-weighted incidence ``D'`` and the Laplacian ``L' = D' D'^T``.

    The off-diagonal entries of ``L'`` are ``-beta_ij**2``.
    """
    beta = gains.as_array(g)
    Dp = incidence(g) * beta[np.newaxis, :]
    return Dp, Dp @ Dp.T


def jacobi_eigvalsh(M, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.

    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``tol`` times the matrix norm (absolute ``tol`` for the zero matrix).
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    scale = max(np.linalg.norm(A), 1.0)
    upper = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        # summed directly: total minus diagonal cancels to ~1e-8 relative
        off = np.sqrt(2.0) * np.linalg.norm(A[upper])
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
    else:
        raise RuntimeError(f"Jacobi eigen-solve did not converge in {max_sweeps} sweeps")
    return np.sort(np.diag(A))


def lambda2(g: Graph) -> float:
    """Algebraic connectivity: the second-smallest Laplacian eigenvalue."""
    if g.n < 2:
        raise GraphError("algebraic connectivity needs at least two agents")
    ev = jacobi_eigvalsh(laplacian(g))
    # roundoff can push a zero eigenvalue slightly negative
    return max(float(ev[1]), 0.0)


def is_connected(g: Graph) -> bool:
    if g.n <= 1:
        return True
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(g.adjacency[i]):
            if not seen[j]:
                seen[j] = True
                queue.append(int(j))
    return bool(seen.all())


def proximity_graph(positions, R: float) -> Graph:
    """Edge ``(i, j)`` iff ``||x_i - x_j||_2 < R``."""
    if R <= 0:
        raise GraphError(f"sensing radius must be positive, got {R}")
    X = np.atleast_2d(np.asarray(positions, dtype=float))
    diff = X[:, np.newaxis, :] - X[np.newaxis, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    adj = (dist < R).astype(np.int8)
    np.fill_diagonal(adj, 0)
    return Graph._from_adjacency(adj)


def pair_index(i: int, j: int, n: int) -> int:
    """Position of the unordered pair ``{i, j}`` in row-major upper-triangle order."""
    if i > j:
        i, j = j, i
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def edge_pair_indices(g: Graph) -> np.ndarray:
    return g.pair_indices.copy()
