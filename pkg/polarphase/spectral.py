"""
Spectral clustering, the connection Laplacian and angular synchronization.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import DegeneracyError, EdgeIndexError, ParameterError, ZeroEdgeError
from .graphs import Graph, connected_components, laplacian, spectral_summary
from .polarization import EdgeEstimate

logger = logging.getLogger(__name__)

ZERO_COORD_TOL = 1e-12
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class ConnectionLaplacian:
    """L1 = I - D^{-1/2} A1 D^{-1/2} with unit-modulus edge weights in A1."""

    matrix: np.ndarray
    degrees: np.ndarray
    graph: Graph


@dataclass(frozen=True, eq=False)
class SyncResult:
    """Vertex phases from angular synchronization."""

    phases: np.ndarray
    eigenvalue: float
    flagged: List[int]


def torus_norm(theta):
    """min over integers k of |theta - 2 pi k|; works elementwise on arrays."""
    r = np.mod(theta, TWO_PI)
    result = np.minimum(r, TWO_PI - r)
    if np.ndim(result) == 0:
        return float(result)
    return result


def canonical_phase(v: np.ndarray) -> np.ndarray:
    """Rotate v so its largest-magnitude coordinate is positive real."""
    k = int(np.argmax(np.abs(v)))
    pivot = v[k]
    if pivot == 0:
        return v
    return v * (np.conj(pivot) / abs(pivot))


def spectral_cluster(g: Graph) -> List[int]:
    """Sweep cut along the second eigenvector of the normalized Laplacian.

    Sweeps S_i = the i smallest entries of D^{-1/2} u for i = 1..n-1 and
    returns the S_i with least Cheeger ratio (first one on ties), or its
    complement when that is smaller.
    """
    n = g.n_vertices
    if n < 2:
        raise DegeneracyError("Spectral clustering needs at least two vertices")
    if len(connected_components(g)) != 1:
        raise DegeneracyError("Spectral clustering needs a connected graph; pass components separately")

    _, vectors = scipy.linalg.eigh(laplacian(g))
    u = canonical_phase(vectors[:, 1])
    deg = g.degrees
    order = np.argsort(u / np.sqrt(deg), kind="stable")

    total_vol = int(deg.sum())
    in_s = np.zeros(n, dtype=bool)
    cut = 0
    vol = 0
    best_h = math.inf
    best_i = 1
    for i, v in enumerate(order[:-1], start=1):
        inside = sum(1 for w in g.neighbors(v) if in_s[w])
        cut += int(deg[v]) - 2 * inside
        vol += int(deg[v])
        in_s[v] = True
        h = cut / min(vol, total_vol - vol)
        if h < best_h - 1e-12:
            best_h = h
            best_i = i

    chosen = order[:best_i]
    if best_i > n - best_i:
        chosen = order[best_i:]
    logger.debug("Spectral cluster found", extra={"n": n, "cluster_size": len(chosen), "cheeger": best_h})
    return sorted(int(v) for v in chosen)


def connection_laplacian(g_prime: Graph, edges: Sequence[EdgeEstimate]) -> ConnectionLaplacian:
    """Build L1 from one estimate per edge of g_prime.

    A1[i, j] is the normalized estimate for orientation (i, j) and A1[j, i] its
    conjugate.
    """
    n = g_prime.n_vertices
    a1 = np.zeros((n, n), dtype=complex)
    covered = np.zeros(g_prime.n_edges, dtype=bool)
    for e in edges:
        i, j = e.edge
        index = g_prime.find_edge(i, j)
        if index is None:
            raise EdgeIndexError(f"Estimate for {e.edge} has no edge in the graph")
        magnitude = e.magnitude
        if magnitude == 0:
            raise ZeroEdgeError(f"Edge {e.edge} has zero magnitude")
        rho = e.value / magnitude
        a1[i, j] = rho
        a1[j, i] = np.conj(rho)
        covered[index] = True
    if not covered.all():
        missing = [g_prime.edges[k] for k in np.flatnonzero(~covered)[:5]]
        raise EdgeIndexError(f"Missing edge estimates, e.g. {missing}")

    deg = g_prime.degrees
    if np.any(deg == 0):
        raise DegeneracyError("Connection Laplacian needs a graph without isolated vertices")
    inv_sqrt = 1.0 / np.sqrt(deg)
    matrix = np.eye(n, dtype=complex) - inv_sqrt[:, None] * a1 * inv_sqrt[None, :]
    return ConnectionLaplacian(matrix=matrix, degrees=deg, graph=g_prime)


def angular_synchronization(cl: ConnectionLaplacian, zero_tol: float = ZERO_COORD_TOL) -> SyncResult:
    """Vertex phases from the bottom eigenvector u of L1.

    Since A1[i, j] approximates conj(w_i) w_j, the bottom eigenvector is
    proportional to D^{1/2} conj(w), so the phases are read off conj(u).
    Coordinates with |u_i| <= zero_tol get phase 1 and are flagged.
    """
    values, vectors = scipy.linalg.eigh(cl.matrix, subset_by_index=[0, 0])
    u = canonical_phase(vectors[:, 0])
    magnitude = np.abs(u)
    flagged = np.flatnonzero(magnitude <= zero_tol)
    phases = np.ones(u.shape, dtype=complex)
    ok = magnitude > zero_tol
    phases[ok] = np.conj(u[ok]) / magnitude[ok]
    if flagged.size:
        logger.warning("Zero coordinates in synchronization eigenvector",
                       extra={"flagged": flagged.tolist()[:20], "count": int(flagged.size)})
    return SyncResult(phases=phases, eigenvalue=float(values[0]), flagged=flagged.tolist())


def sync_error_bound(cl: ConnectionLaplacian, P: float, tau: Optional[float], eps_norm: float) -> float:
    """Constant-free diagnostic ||eps||^2 / (tau^2 P^2).

    tau defaults to the spectral gap of the graph underlying cl.
    """
    if tau is None:
        tau = spectral_summary(cl.graph).spectral_gap
    if P <= 0 or tau <= 0:
        raise ParameterError(f"P and tau must be positive (got P={P}, tau={tau})")
    return eps_norm ** 2 / (tau ** 2 * P ** 2)


def aligned_phase_errors(phases: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-vertex torus distance after rotating phases by the best global angle."""
    theta = np.angle(np.vdot(phases, truth))
    return torus_norm(np.angle(phases) + theta - np.angle(truth))
