"""Random graph substrate: generation, opinion assignment, and measurement.

Graphs are simple (no self-loops, no duplicate edges) and undirected, drawn
from the fixed-edge-count ensemble G(n, K) with K = round(n * mean_degree / 2),
so the mean degree matches the ODE layer exactly rather than in expectation.
"""

import math
import random
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import NeighborhoodGrid

OPINION_A = 1
OPINION_B = 0


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with adjacency sets, immutable by convention."""

    n: int
    edges: tuple          # ((u, v), ...) with u < v
    adjacency: tuple      # frozenset of neighbors per node

    @property
    def edge_count(self):
        return len(self.edges)

    @staticmethod
    def from_edges(n, edges):
        adj = [set() for _ in range(n)]
        seen = set()
        norm = []
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            a, b = (u, v) if u < v else (v, u)
            if (a, b) in seen:
                raise ValueError(f"duplicate edge ({a}, {b})")
            if not (0 <= a and b < n):
                raise ValueError(f"edge ({a}, {b}) out of range for n={n}")
            seen.add((a, b))
            norm.append((a, b))
            adj[a].add(b)
            adj[b].add(a)
        return Graph(n, tuple(norm), tuple(frozenset(s) for s in adj))


@dataclass(frozen=True)
class OpinionState:
    """Binary opinion per node; values[i] is OPINION_A or OPINION_B."""

    values: np.ndarray

    @property
    def n_a(self):
        return int(np.count_nonzero(self.values == OPINION_A))


def _pair_offset(i, n):
    # index of the first pair (i, i+1) in lexicographic (i, j), i < j order
    return i * (2 * n - i - 1) // 2


def _decode_pair(m, n):
    """Map a flat index in [0, n(n-1)/2) to the m-th pair (i, j), i < j."""
    s = math.isqrt((2 * n - 1) ** 2 - 8 * m)
    i = (2 * n - 1 - s) // 2
    while _pair_offset(i + 1, n) <= m:
        i += 1
    while _pair_offset(i, n) > m:
        i -= 1
    j = i + 1 + (m - _pair_offset(i, n))
    return i, j


def generate_er(n, mean_degree, seed):
    """Erdos-Renyi graph from the G(n, K) ensemble, K = round(n*mean_degree/2).

    Edges are drawn uniformly without replacement from all node pairs;
    deterministic for a given seed.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if mean_degree <= 0:
        raise ValueError("mean_degree must be positive")
    if mean_degree >= n - 1:
        raise ValueError(
            f"mean_degree={mean_degree} too large for n={n}: "
            "cannot place that many distinct edges")
    k_edges = int(round(n * mean_degree / 2.0))
    total = n * (n - 1) // 2
    rng = random.Random(seed)
    flat = rng.sample(range(total), k_edges)
    return Graph.from_edges(n, [_decode_pair(m, n) for m in flat])


def assign_opinions(graph, seed, a_count=None):
    """Assign opinion A to a uniform random subset of a_count nodes.

    a_count defaults to floor(n/2), the balanced split the dynamics assume;
    the override exists for bias experiments and tests.
    """
    n = graph.n
    if n < 1:
        raise ValueError("graph is empty")
    if a_count is None:
        a_count = n // 2
    if not 0 <= a_count <= n:
        raise ValueError("a_count out of range")
    rng = random.Random(seed)
    values = np.full(n, OPINION_B, dtype=np.int8)
    values[rng.sample(range(n), a_count)] = OPINION_A
    return OpinionState(values)


def count_active_links(graph, opinions):
    """Number of edges whose endpoints hold different opinions."""
    s = opinions.values
    return sum(1 for u, v in graph.edges if s[u] != s[v])


def neighborhood_histogram(graph, opinions, k_max):
    """Histogram of A-opinion nodes over (inert degree, active degree).

    Entry (k, l) counts A-nodes with k same-opinion and l opposite-opinion
    neighbors, normalized by the number of A-nodes. Nodes with either count
    beyond k_max contribute to the reported tail mass instead of being
    silently truncated; a warning signals nonzero overflow.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    s = opinions.values
    counts = np.zeros((k_max + 1, k_max + 1), dtype=np.int64)
    overflow = 0
    n_a = 0
    for node in range(graph.n):
        if s[node] != OPINION_A:
            continue
        n_a += 1
        k = 0
        l = 0
        for w in graph.adjacency[node]:
            if s[w] == OPINION_A:
                k += 1
            else:
                l += 1
        if k > k_max or l > k_max:
            overflow += 1
        else:
            counts[k, l] += 1
    if n_a == 0:
        raise ValueError("no A-opinion nodes to histogram")
    if overflow:
        warnings.warn(
            f"{overflow} of {n_a} A-nodes exceed k_max={k_max}; "
            "their mass is reported as tail_mass", stacklevel=2)
    values = counts / float(n_a)
    return NeighborhoodGrid(values, tail_mass=overflow / float(n_a),
                            counts=counts, n_source=n_a)
