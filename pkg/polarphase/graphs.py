"""
Measurement graphs: construction, storage and spectral analysis.

Edges are stored once as oriented (tail, head) pairs. The orientation only
decides which frame vector carries the cube-root-of-unity factor in the edge
measurements; every undirected query (degree, components, Laplacian) ignores it.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import scipy.linalg

from .errors import DegeneracyError, InfeasibleParametersError, ParameterError, RetryExhaustedError

logger = logging.getLogger(__name__)

GAP_TOL = 1e-9

Edge = Tuple[int, int]


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph whose edges carry a (tail, head) label."""

    n_vertices: int
    edges: Tuple[Edge, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n_vertices < 0:
            raise ParameterError(f"n_vertices must be non-negative (got {self.n_vertices})")
        seen = set()
        for tail, head in self.edges:
            if tail == head:
                raise ParameterError(f"Self-loop at vertex {tail}")
            if not (0 <= tail < self.n_vertices and 0 <= head < self.n_vertices):
                raise ParameterError(f"Edge ({tail}, {head}) has an endpoint outside 0..{self.n_vertices - 1}")
            key = (min(tail, head), max(tail, head))
            if key in seen:
                raise ParameterError(f"Duplicate edge {key}")
            seen.add(key)

    @classmethod
    def from_edges(cls, n_vertices: int, edges: Iterable[Sequence[int]]) -> "Graph":
        """Build a graph, sorting edges by their undirected pair and keeping orientation."""
        oriented = [(int(e[0]), int(e[1])) for e in edges]
        oriented.sort(key=lambda e: (min(e), max(e)))
        return cls(int(n_vertices), tuple(oriented))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def pairs(self) -> np.ndarray:
        """Undirected (i, j) pairs with i < j, shape (|E|, 2)."""
        if not self.edges:
            return np.zeros((0, 2), dtype=int)
        arr = np.array(self.edges, dtype=int)
        return np.sort(arr, axis=1)

    @cached_property
    def oriented(self) -> np.ndarray:
        """Edges as stored (tail, head), shape (|E|, 2)."""
        if not self.edges:
            return np.zeros((0, 2), dtype=int)
        return np.array(self.edges, dtype=int)

    @cached_property
    def edge_index(self) -> Dict[Edge, int]:
        """Map from undirected pair (i < j) to edge position."""
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.pairs)}

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_vertices, self.n_vertices))
        if self.edges:
            i, j = self.pairs[:, 0], self.pairs[:, 1]
            a[i, j] = 1.0
            a[j, i] = 1.0
        return a

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=int)
        if self.edges:
            np.add.at(deg, self.pairs.ravel(), 1)
        return deg

    @cached_property
    def adjacency_lists(self) -> List[List[int]]:
        adj: List[List[int]] = [[] for _ in range(self.n_vertices)]
        for i, j in self.pairs:
            adj[i].append(int(j))
            adj[j].append(int(i))
        for nbrs in adj:
            nbrs.sort()
        return adj

    def neighbors(self, v: int) -> List[int]:
        return self.adjacency_lists[v]

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edge_index

    def find_edge(self, i: int, j: int) -> Optional[int]:
        return self.edge_index.get((min(i, j), max(i, j)))


@dataclass(frozen=True, eq=False)
class SpectralSummary:
    """Normalized-Laplacian spectrum of a graph."""

    eigenvalues: np.ndarray
    spectral_gap: float
    expansion: float


def to_networkx(g: Graph) -> nx.Graph:
    """Undirected networkx view with vertices 0..n-1; edge orientation is dropped."""
    nxg = nx.Graph()
    nxg.add_nodes_from(range(g.n_vertices))
    nxg.add_edges_from(g.edges)
    return nxg


def induced_subgraph(g: Graph, vertices: Iterable[int]) -> Tuple[Graph, np.ndarray]:
    """Subgraph on the given vertices, relabelled 0..k-1 in increasing order.

    Returns the subgraph and the array mapping new labels to original ones.
    """
    keep = np.array(sorted(set(int(v) for v in vertices)), dtype=int)
    relabel = {int(v): k for k, v in enumerate(keep)}
    edges = [(relabel[t], relabel[h]) for t, h in g.edges if t in relabel and h in relabel]
    return Graph.from_edges(len(keep), edges), keep


def gen_erdos_renyi(n: int, p: float, seed=None) -> Graph:
    """Erdős–Rényi G(n, p); each edge oriented from its smaller endpoint."""
    if n < 1:
        raise ParameterError(f"n must be at least 1 (got {n})")
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise ParameterError(f"Edge probability must lie in [0, 1] (got {p})")
    rng = np.random.default_rng(seed)
    rows, cols = np.triu_indices(n, k=1)
    mask = rng.random(rows.size) < p
    edges = tuple(zip(rows[mask].tolist(), cols[mask].tolist()))
    return Graph(n, edges)


def _suitable(edges: set, potential_edges: Dict[int, int]) -> bool:
    # Can the leftover stubs still be paired without a loop or repeat?
    if not potential_edges:
        return True
    nodes = sorted(potential_edges)
    for a, s1 in enumerate(nodes):
        for s2 in nodes[a + 1:]:
            if (s1, s2) not in edges:
                return True
    return False


def _try_pairing(n: int, d: int, rng: np.random.Generator) -> Optional[set]:
    edges: set = set()
    stubs = np.repeat(np.arange(n), d).tolist()
    while stubs:
        potential_edges: Dict[int, int] = defaultdict(int)
        order = rng.permutation(len(stubs))
        shuffled = [stubs[k] for k in order]
        for s1, s2 in zip(shuffled[0::2], shuffled[1::2]):
            if s1 > s2:
                s1, s2 = s2, s1
            if s1 != s2 and (s1, s2) not in edges:
                edges.add((s1, s2))
            else:
                potential_edges[s1] += 1
                potential_edges[s2] += 1
        if not _suitable(edges, potential_edges):
            return None
        stubs = [node for node, count in sorted(potential_edges.items()) for _ in range(count)]
    return edges


def gen_random_regular(n: int, d: int, seed=None, max_restarts: int = 1000) -> Graph:
    """Random simple d-regular graph by stub pairing with whole-graph restarts.

    Stubs are paired in rounds; pairs that would form a loop or a repeated edge
    go back to the pool. When the pool can no longer be paired the whole graph
    is discarded and drawn again.
    """
    if d % 2 != 0:
        raise ParameterError(f"Degree must be even (got d={d})")
    if d < 2 or d >= n:
        raise ParameterError(f"Degree must satisfy 2 <= d < n (got d={d}, n={n})")
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_restarts + 1):
        edges = _try_pairing(n, d, rng)
        if edges is not None:
            if attempt > 1:
                logger.debug("Random regular graph accepted", extra={"n": n, "d": d, "attempts": attempt})
            return Graph.from_edges(n, sorted(edges))
    raise RetryExhaustedError(
        f"No simple {d}-regular graph on {n} vertices after {max_restarts} restarts",
        attempts=max_restarts,
    )


def laplacian(g: Graph) -> np.ndarray:
    """Normalized Laplacian I - D^{-1/2} A D^{-1/2}; rejects isolated vertices."""
    deg = g.degrees
    if g.n_vertices == 0:
        raise DegeneracyError("Empty graph has no Laplacian")
    if np.any(deg == 0):
        isolated = np.flatnonzero(deg == 0).tolist()
        raise DegeneracyError(f"Graph has isolated vertices {isolated[:10]}")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return np.eye(g.n_vertices) - inv_sqrt[:, None] * g.adjacency * inv_sqrt[None, :]


def spectral_summary(g: Graph) -> SpectralSummary:
    """Eigenvalues of the normalized Laplacian, spectral gap and expansion."""
    if g.n_vertices < 2:
        raise DegeneracyError("Spectral gap needs at least two vertices")
    eigenvalues = np.sort(scipy.linalg.eigh(laplacian(g), eigvals_only=True))
    gap = float(eigenvalues[1])
    expansion = float(max(abs(1.0 - eigenvalues[1]), abs(1.0 - eigenvalues[-1])))
    return SpectralSummary(eigenvalues=eigenvalues, spectral_gap=gap, expansion=expansion)


def connected_components(g: Graph) -> List[List[int]]:
    """Components as sorted vertex lists, ordered by smallest member."""
    components = [sorted(c) for c in nx.connected_components(to_networkx(g))]
    components.sort(key=lambda c: c[0])
    return components


def largest_component(g: Graph) -> List[int]:
    """Largest component; ties go to the one with the smallest member."""
    components = connected_components(g)
    if not components:
        return []
    return max(components, key=lambda c: (len(c), -c[0]))


def cut_size(g: Graph, subset: Iterable[int]) -> int:
    """Number of edges E(S, S^c) with exactly one endpoint in `subset`."""
    mask = np.zeros(g.n_vertices, dtype=bool)
    mask[list(subset)] = True
    if not g.edges:
        return 0
    return int(np.count_nonzero(mask[g.pairs[:, 0]] != mask[g.pairs[:, 1]]))


def volume(g: Graph, subset: Iterable[int]) -> int:
    """vol(S), the degree sum over `subset`."""
    return int(g.degrees[list(subset)].sum())


def cheeger_ratio(g: Graph, subset: Iterable[int]) -> float:
    """h(S) = E(S, S^c) / min(vol S, vol S^c)."""
    subset = list(subset)
    vol_s = volume(g, subset)
    vol_c = int(g.degrees.sum()) - vol_s
    denom = min(vol_s, vol_c)
    if denom == 0:
        return math.inf
    return cut_size(g, subset) / denom


def connectivity_threshold(p: float, q: float, lambda2: float) -> float:
    """Pruning threshold tau = (lambda2 - g(p, q))^2 / 8.

    g(p, q) = 1 - 2(q(1 - q) - (1 - p)). Requires p >= q >= 2/3 and
    lambda2 > g(p, q).
    """
    if not (q >= 2.0 / 3.0 - 1e-12 and p >= q and p <= 1.0):
        raise ParameterError(f"Need 1 >= p >= q >= 2/3 (got p={p}, q={q})")
    g_pq = 1.0 - 2.0 * (q * (1.0 - q) - (1.0 - p))
    if lambda2 <= g_pq:
        raise InfeasibleParametersError(
            f"Spectral gap {lambda2:.6g} does not exceed g(p, q) = {g_pq:.6g}"
        )
    return (lambda2 - g_pq) ** 2 / 8.0


def connectivity_deletion_budget(n: int, d: int, lambda2: float) -> Tuple[float, float]:
    """Edge-removal budget under which a d-regular graph keeps a big component.

    For eps <= lambda2 / 6, removing eps*d*n edges leaves a component with at
    least (1 - 2 eps / lambda2) n vertices. Returns (eps_max, guaranteed size).
    """
    if lambda2 <= 0:
        raise ParameterError(f"Spectral gap must be positive (got {lambda2})")
    eps_max = lambda2 / 6.0
    return eps_max, (1.0 - 2.0 * eps_max / lambda2) * n


def regular_gap_target(d: int, eps: float) -> float:
    """lambda' = 1 - (2 sqrt(d - 1) + eps) / d."""
    return 1.0 - (2.0 * math.sqrt(d - 1) + eps) / d


def design_a_vertex_count(M: int, d: int, eps: float) -> int:
    """Vertex count ceil(6 (M - 1) / lambda') for the noiseless design."""
    target = regular_gap_target(d, eps)
    if target <= 0:
        raise ParameterError(f"d={d}, eps={eps} gives no spectral gap guarantee")
    return max(int(math.ceil(6.0 * (M - 1) / target)), M)


def design_b_vertex_count(M: int, c: float) -> int:
    """Vertex count ceil(c M log M) for the noisy design."""
    if M < 2 or c <= 0:
        raise ParameterError(f"Need M >= 2 and c > 0 (got M={M}, c={c})")
    return max(int(math.ceil(c * M * math.log(M))), M)


def certified_regular_graph(n: int, d: int, eps: float, seed=None, max_draws: int = 50,
                            max_restarts: int = 1000) -> Tuple[Graph, SpectralSummary]:
    """Draw random d-regular graphs until one has gap >= lambda'."""
    target = regular_gap_target(d, eps)
    rng = np.random.default_rng(seed)
    for draw in range(1, max_draws + 1):
        g = gen_random_regular(n, d, seed=rng, max_restarts=max_restarts)
        summary = spectral_summary(g)
        if summary.spectral_gap >= target:
            logger.info("Certified regular graph", extra={
                "n": n, "d": d, "draws": draw, "spectral_gap": summary.spectral_gap,
            })
            return g, summary
    raise RetryExhaustedError(
        f"No {d}-regular graph on {n} vertices reached gap {target:.4f} in {max_draws} draws",
        attempts=max_draws,
    )


def expander_redundancy_bound(d: int, eps: float) -> float:
    """N/M bound (3d/2 + 1) n / ((1 - (2 sqrt(d-1) + eps)/d) n / 6)."""
    target = regular_gap_target(d, eps)
    if target <= 0:
        raise ParameterError(f"d={d}, eps={eps} gives no spectral gap guarantee")
    return (1.5 * d + 1.0) * 6.0 / target


def ramanujan_redundancy_bound(d: int = 6) -> float:
    """Bound for graphs meeting the Ramanujan expansion exactly; d=6 gives 45(3 + sqrt 5)."""
    return expander_redundancy_bound(d, 0.0)


def expander_mixing_gap(g: Graph, subset: Iterable[int],
                        summary: Optional[SpectralSummary] = None) -> Tuple[float, float]:
    """Deviation |E(S,S^c) - (d/n)|S||S^c|| and the mixing-lemma bound for a regular graph."""
    degs = np.unique(g.degrees)
    if degs.size != 1:
        raise ParameterError("Expander mixing check needs a regular graph")
    d = int(degs[0])
    summary = summary or spectral_summary(g)
    subset = list(subset)
    s = len(subset)
    sc = g.n_vertices - s
    deviation = abs(cut_size(g, subset) - d / g.n_vertices * s * sc)
    bound = d * summary.expansion * math.sqrt(s * sc)
    return deviation, bound


def write_edge_list(g: Graph, path: Union[str, Path]) -> None:
    """Write the 'n_vertices=<n>' header then one 'tail head' line per edge."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"n_vertices={g.n_vertices}\n")
        for tail, head in g.edges:
            f.write(f"{tail} {head}\n")


def read_edge_list(path: Union[str, Path]) -> Graph:
    """
    Read a graph written by write_edge_list.

    Args:
        path: File with an 'n_vertices=<n>' header and one 'tail head' pair per line

    Returns:
        Graph with the stored orientation of every edge

    Raises:
        ParameterError: if the header is missing
    """
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith("n_vertices="):
            raise ParameterError(f"Missing 'n_vertices=' header in {path}")
        n = int(header.split("=", 1)[1])
        edges = []
        for line in f:
            line = line.strip()
            if line:
                tail, head = line.split()
                edges.append((int(tail), int(head)))
    return Graph.from_edges(n, edges)
