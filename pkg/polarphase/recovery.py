"""
End-to-end phase retrieval.

procedure_a propagates relative phases along a spanning tree of a large
component (noiseless data). procedure_b prunes the graph for reliable edges
and for connectivity, synchronizes vertex phases with the connection
Laplacian, drops the largest vertices and solves least squares (noisy data).
"""

import json
import logging
import math
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .ensemble import IntensityData, MeasurementEnsemble, linear_measurements
from .errors import (
    DegeneracyError,
    ParameterError,
    PolarPhaseError,
    ReconstructionInfeasibleError,
    UnrecoverableError,
)
from .graphs import GAP_TOL, Graph, connected_components, induced_subgraph, largest_component, spectral_summary
from .polarization import EdgeEstimate, polarize_array
from .spectral import (
    aligned_phase_errors,
    angular_synchronization,
    connection_laplacian,
    spectral_cluster,
    sync_error_bound,
)

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
NEGATIVE_SLACK = 1e-12


@dataclass(frozen=True)
class PruneParams:
    """Pruning parameters for both procedures."""

    alpha: float = 0.9925
    tau: float = 0.1
    kappa: float = 0.9
    zero_tol: float = 1e-4

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ParameterError(f"alpha must lie in (0, 1) (got {self.alpha})")
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive (got {self.tau})")
        if not 0 < self.kappa <= 1:
            raise ParameterError(f"kappa must lie in (0, 1] (got {self.kappa})")
        if not self.zero_tol >= 0:
            raise ParameterError(f"zero_tol must be non-negative (got {self.zero_tol})")

    @classmethod
    def from_settings(cls, settings: Dict[str, Any]) -> "PruneParams":
        prune = settings.get("prune", {})
        return cls(**{k: float(v) for k, v in prune.items() if k in ("alpha", "tau", "kappa", "zero_tol")})


@dataclass(frozen=True, eq=False)
class Subgraph:
    """A pruned graph plus the original labels of its vertices."""

    graph: Graph
    vertices: np.ndarray
    flags: Tuple[str, ...] = ()

    def restrict(self, local_vertices: Iterable[int]) -> "Subgraph":
        graph, local = induced_subgraph(self.graph, local_vertices)
        return Subgraph(graph=graph, vertices=self.vertices[local], flags=self.flags)


@dataclass
class RecoveryReport:
    """Estimate plus the diagnostics gathered along the pipeline."""

    method: str
    estimate: np.ndarray
    surviving_vertices: Dict[str, List[int]] = field(default_factory=dict)
    aligned_error: Optional[float] = None
    theta: Optional[float] = None
    spectral_gap_final: Optional[float] = None
    min_edge_magnitude: Optional[float] = None
    sigma_min: Optional[float] = None
    deleted_vertex_count: int = 0
    flags: List[str] = field(default_factory=list)
    sync_zero_coords: List[int] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def score(self, truth: np.ndarray) -> "RecoveryReport":
        self.theta, self.aligned_error = align_and_error(self.estimate, truth)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "estimate": {
                "real": self.estimate.real.tolist(),
                "imag": self.estimate.imag.tolist(),
            },
            "aligned_error": self.aligned_error,
            "theta": self.theta,
            "surviving_vertices": {k: sorted(int(v) for v in vs) for k, vs in self.surviving_vertices.items()},
            "spectral_gap_final": self.spectral_gap_final,
            "min_edge_magnitude": self.min_edge_magnitude,
            "sigma_min": self.sigma_min,
            "deleted_vertex_count": self.deleted_vertex_count,
            "flags": list(self.flags),
            "sync_zero_coords": list(self.sync_zero_coords),
            "timings_s": dict(self.timings),
            "diagnostics": dict(self.diagnostics),
        }


def report_to_json(report: RecoveryReport, indent: Optional[int] = 2) -> str:
    """JSON with complex vectors split into real and imag lists."""
    return json.dumps(report.to_dict(), indent=indent)


class _StageTimer:
    """Accumulates wall time per named stage."""

    def __init__(self, timings: Dict[str, float]):
        self.timings = timings

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start


def _floor(x: float) -> int:
    return int(math.floor(x + 1e-9))


def _ceil(x: float) -> int:
    return int(math.ceil(x - 1e-9))


def prune_reliability(g: Graph, edge_mags: Sequence[float], alpha: float) -> Subgraph:
    """Repeatedly delete both endpoints of the weakest surviving edge.

    Runs floor((1 - alpha) |V|) rounds. Ties go to the lower edge index. Stops
    early, with a flag, once no edge has both endpoints alive.
    """
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1) (got {alpha})")
    mags = np.asarray(edge_mags, dtype=float)
    if mags.shape != (g.n_edges,):
        raise ParameterError(f"Need one magnitude per edge ({g.n_edges}), got shape {mags.shape}")

    rounds = _floor((1.0 - alpha) * g.n_vertices)
    alive = np.ones(g.n_vertices, dtype=bool)
    order = np.lexsort((np.arange(g.n_edges), mags))
    cursor = 0
    flags: List[str] = []
    for _ in range(rounds):
        while cursor < order.size:
            i, j = g.pairs[order[cursor]]
            if alive[i] and alive[j]:
                break
            cursor += 1
        if cursor >= order.size:
            flags.append("reliability_early_stop")
            break
        i, j = g.pairs[order[cursor]]
        alive[i] = alive[j] = False
        cursor += 1

    kept = np.flatnonzero(alive)
    graph, local = induced_subgraph(g, kept)
    logger.debug("Pruned for reliability", extra={
        "rounds": rounds, "removed": int(g.n_vertices - kept.size), "flags": flags,
    })
    return Subgraph(graph=graph, vertices=local, flags=tuple(flags))


def prune_connectivity(g: Graph, tau: float, gap_tol: float = GAP_TOL) -> Subgraph:
    """Remove spectral clusters until the spectral gap reaches tau.

    A disconnected graph is first cut down to its largest component. Returns
    once the gap is at least tau, or with a 'single_vertex' flag when only one
    vertex is left.
    """
    if not tau > 0:
        raise ParameterError(f"tau must be positive (got {tau})")
    current = Subgraph(graph=g, vertices=np.arange(g.n_vertices))
    rounds = 0
    while True:
        h = current.graph
        if h.n_vertices == 0:
            raise DegeneracyError("Connectivity pruning emptied the graph")
        if h.n_vertices == 1:
            return Subgraph(graph=h, vertices=current.vertices, flags=("single_vertex",))
        components = connected_components(h)
        if len(components) > 1:
            current = current.restrict(largest_component(h))
            continue
        gap = spectral_summary(h).spectral_gap
        if gap >= tau - gap_tol:
            logger.debug("Pruned for connectivity", extra={
                "rounds": rounds, "vertices": h.n_vertices, "spectral_gap": gap,
            })
            return current
        cluster = set(spectral_cluster(h))
        current = current.restrict(v for v in range(h.n_vertices) if v not in cluster)
        rounds += 1


def remove_large_vertices(vertices: Sequence[int], vertex_z: Sequence[float], kappa: float,
                          n_original: int) -> Tuple[List[int], bool]:
    """Keep the ceil(kappa n_original) vertices with the smallest intensities.

    Returns the kept vertices (sorted) and whether fewer than that many were
    available, in which case everything is kept.
    """
    vertices = [int(v) for v in vertices]
    z = np.asarray(vertex_z, dtype=float)
    target = _ceil(kappa * n_original)
    if target > len(vertices):
        return sorted(vertices), True
    ranked = sorted(vertices, key=lambda v: (z[v], v))
    return sorted(ranked[:target]), False


def least_squares_with_sigma(phi_sub: np.ndarray, y: np.ndarray, rank_tol: float = RANK_TOL
                             ) -> Tuple[np.ndarray, float]:
    """Minimizer of ||phi_sub^H x - y|| and the smallest singular value of phi_sub."""
    M, cols = phi_sub.shape
    y = np.asarray(y, dtype=complex)
    if y.shape != (cols,):
        raise ParameterError(f"Need one coefficient per frame vector ({cols}), got shape {y.shape}")
    if cols < M:
        raise ReconstructionInfeasibleError(f"{cols} frame vectors cannot span dimension {M}", sigma_min=0.0)
    x, _, _, singular = scipy.linalg.lstsq(phi_sub.conj().T, y)
    sigma_min = float(singular.min()) if singular.size else 0.0
    if singular.size < M or sigma_min <= rank_tol:
        raise ReconstructionInfeasibleError(
            f"Frame is rank deficient (sigma_min={sigma_min:.3e})", sigma_min=sigma_min
        )
    return x, sigma_min


def least_squares_reconstruct(phi_sub: np.ndarray, y: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Apply the canonical dual frame (Moore-Penrose pseudoinverse) of phi_sub."""
    x, _ = least_squares_with_sigma(phi_sub, y, rank_tol)
    return x


def align_and_error(xt: np.ndarray, x: np.ndarray) -> Tuple[float, float]:
    """Best global phase theta and ||xt - e^{i theta} x|| / ||x||."""
    x = np.asarray(x, dtype=complex)
    xt = np.asarray(xt, dtype=complex)
    norm_x = np.linalg.norm(x)
    if norm_x == 0:
        raise ParameterError("Cannot measure relative error against a zero signal")
    inner = np.vdot(x, xt)
    theta = float(np.mod(np.angle(inner), 2.0 * np.pi)) if inner != 0 else 0.0
    error = float(np.linalg.norm(xt - np.exp(1j * theta) * x) / norm_x)
    return theta, error


def estimate_projective_uniformity(phi: np.ndarray, alpha: float, n_samples: int, seed=None,
                                   chunk: int = 4096) -> float:
    """Monte-Carlo upper estimate of the alpha-projective uniformity of phi.

    For each random unit vector x the inner max-min equals the ceil(alpha n)-th
    largest |<x, phi_i>|^2; the minimum over samples is returned.
    """
    if not 0 < alpha <= 1:
        raise ParameterError(f"alpha must lie in (0, 1] (got {alpha})")
    if n_samples < 1:
        raise ParameterError(f"n_samples must be positive (got {n_samples})")
    M, n = phi.shape
    k = max(_ceil(alpha * n), 1)
    rng = np.random.default_rng(seed)
    best = math.inf
    remaining = n_samples
    while remaining > 0:
        size = min(chunk, remaining)
        x = rng.standard_normal((M, size)) + 1j * rng.standard_normal((M, size))
        x /= np.linalg.norm(x, axis=0, keepdims=True)
        values = np.abs(phi.conj().T @ x) ** 2
        kth_largest = np.sort(values, axis=0)[n - k, :]
        best = min(best, float(kth_largest.min()))
        remaining -= size
    return best


def error_to_nsr_ratio(error: float, M: int, nsr: float) -> float:
    """error^2 / (sqrt(M / log M) NSR), monitored across dimensions."""
    if nsr <= 0 or M < 2:
        return float("nan")
    return error ** 2 / (math.sqrt(M / math.log(M)) * nsr)


def _edge_lookup(g: Graph, values: np.ndarray, sub: Subgraph) -> np.ndarray:
    """Polarized values aligned with sub.graph.edges (orientation is preserved)."""
    out = np.empty(sub.graph.n_edges, dtype=complex)
    for k, (t, h) in enumerate(sub.graph.edges):
        out[k] = values[g.find_edge(int(sub.vertices[t]), int(sub.vertices[h]))]
    return out


def _propagate_phases(sub: Subgraph, sub_values: np.ndarray, root: int) -> np.ndarray:
    """Breadth-first phase propagation; w_head = w_tail * rho along each edge.

    Zero-valued edges carry no phase. Raises UnrecoverableError (stage
    "propagation") when they leave part of the component unreached.
    """
    g = sub.graph
    phases = np.zeros(g.n_vertices, dtype=complex)
    phases[root] = 1.0
    visited = np.zeros(g.n_vertices, dtype=bool)
    visited[root] = True
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for w in g.neighbors(u):
            if visited[w]:
                continue
            index = g.find_edge(u, w)
            value = sub_values[index]
            magnitude = abs(value)
            if magnitude == 0:
                continue
            rho = value / magnitude
            tail, _ = g.edges[index]
            phases[w] = phases[u] * (rho if tail == u else np.conj(rho))
            visited[w] = True
            queue.append(w)
    if not visited.all():
        missing = np.flatnonzero(~visited)
        raise UnrecoverableError(
            f"{missing.size} component vertices are reachable only through zero-valued edges",
            stage="propagation",
        )
    return phases


def _signal_diagnostics(report: RecoveryReport, ens: MeasurementEnsemble, data: IntensityData,
                        truth: np.ndarray) -> None:
    a, b = linear_measurements(ens, truth)
    clean = np.concatenate([np.abs(a) ** 2, (np.abs(b) ** 2).reshape(-1)])
    norm_x2 = float(np.linalg.norm(truth) ** 2)
    if norm_x2 > 0:
        nsr = float(np.linalg.norm(data.as_vector() - clean) / norm_x2)
        report.diagnostics["nsr"] = nsr
        if report.aligned_error is not None:
            report.diagnostics["error_nsr_ratio"] = error_to_nsr_ratio(report.aligned_error, ens.dim, nsr)


def procedure_a(ens: MeasurementEnsemble, data: IntensityData, params: Optional[PruneParams] = None,
                truth: Optional[np.ndarray] = None) -> RecoveryReport:
    """Noiseless recovery by relative-phase propagation on a component of >= M vertices."""
    params = params or PruneParams()
    data.check_aligned(ens)
    if np.any(data.vertex_z < -NEGATIVE_SLACK):
        raise ParameterError("Procedure A expects noiseless intensities; found negative vertex values")

    g = ens.graph
    timings: Dict[str, float] = {}
    timer = _StageTimer(timings)
    surviving = {"input": list(range(g.n_vertices))}

    with timer.stage("deletion"):
        keep = np.flatnonzero(data.vertex_z >= params.zero_tol)
        deleted = g.n_vertices - keep.size
        if keep.size == 0:
            raise UnrecoverableError("every vertex fell below the deletion tolerance", stage="deletion")
        graph, local = induced_subgraph(g, keep)
        alive = Subgraph(graph=graph, vertices=local)
        surviving["nonzero"] = local.tolist()

    with timer.stage("component"):
        component = largest_component(alive.graph)
        if len(component) < ens.dim:
            raise UnrecoverableError(
                f"largest component has {len(component)} vertices, need {ens.dim}", stage="component"
            )
        comp = alive.restrict(component)
        surviving["component"] = comp.vertices.tolist()

    with timer.stage("propagation"):
        values = polarize_array(data.edge_z)
        sub_values = _edge_lookup(g, values, comp)
        phases = _propagate_phases(comp, sub_values, root=0)
        magnitudes = np.sqrt(np.maximum(data.vertex_z[comp.vertices], 0.0))
        coefficients = phases * magnitudes

    with timer.stage("reconstruction"):
        try:
            estimate, sigma_min = least_squares_with_sigma(ens.phi_v[:, comp.vertices], coefficients)
        except ReconstructionInfeasibleError as e:
            raise UnrecoverableError(str(e), stage="reconstruction") from e

    report = RecoveryReport(
        method="a",
        estimate=estimate,
        surviving_vertices=surviving,
        sigma_min=sigma_min,
        deleted_vertex_count=int(deleted),
        timings=timings,
    )
    if truth is not None:
        report.score(truth)
        _signal_diagnostics(report, ens, data, truth)
    logger.debug("Procedure A complete", extra={
        "component_size": len(component), "deleted": int(deleted), "aligned_error": report.aligned_error,
    })
    return report


def procedure_b(ens: MeasurementEnsemble, data: IntensityData, params: Optional[PruneParams] = None,
                truth: Optional[np.ndarray] = None) -> RecoveryReport:
    """Noisy recovery: reliability pruning, connectivity pruning, synchronization, least squares."""
    params = params or PruneParams()
    data.check_aligned(ens)
    g = ens.graph
    timings: Dict[str, float] = {}
    timer = _StageTimer(timings)
    flags: List[str] = []
    surviving = {"input": list(range(g.n_vertices))}

    with timer.stage("polarization"):
        values = polarize_array(data.edge_z)

    with timer.stage("reliability"):
        reliable = prune_reliability(g, np.abs(values), params.alpha)
        flags.extend(reliable.flags)
        surviving["reliability"] = reliable.vertices.tolist()

    with timer.stage("component"):
        component = largest_component(reliable.graph)
        if len(component) < 2:
            raise UnrecoverableError("no edges survive reliability pruning", stage="component")
        comp = reliable.restrict(component)

    with timer.stage("connectivity"):
        try:
            pruned = prune_connectivity(comp.graph, params.tau)
        except DegeneracyError as e:
            raise UnrecoverableError(str(e), stage="connectivity") from e
        flags.extend(pruned.flags)
        if pruned.graph.n_vertices < 2:
            raise UnrecoverableError("connectivity pruning left a single vertex", stage="connectivity")
        final = Subgraph(graph=pruned.graph, vertices=comp.vertices[pruned.vertices])
        surviving["connectivity"] = final.vertices.tolist()
        gap = spectral_summary(final.graph).spectral_gap

    with timer.stage("synchronization"):
        sub_values = _edge_lookup(g, values, final)
        estimates = [EdgeEstimate(edge=edge, value=complex(v)) for edge, v in zip(final.graph.edges, sub_values)]
        P = float(np.abs(sub_values).min())
        try:
            cl = connection_laplacian(final.graph, estimates)
        except PolarPhaseError as e:
            raise UnrecoverableError(str(e), stage="synchronization") from e
        sync = angular_synchronization(cl)
        if sync.flagged:
            flags.append("sync_zero_coordinates")

    with timer.stage("reconstruction"):
        kept, short = remove_large_vertices(final.vertices, data.vertex_z, params.kappa, g.n_vertices)
        if short:
            flags.append("kappa_unreachable")
        position = {int(v): k for k, v in enumerate(final.vertices)}
        kept_pos = np.array([position[v] for v in kept], dtype=int)
        kept_arr = np.array(kept, dtype=int)
        magnitudes = np.sqrt(np.maximum(data.vertex_z[kept_arr], 0.0))
        coefficients = sync.phases[kept_pos] * magnitudes
        surviving["kept"] = kept
        try:
            estimate, sigma_min = least_squares_with_sigma(ens.phi_v[:, kept_arr], coefficients)
        except ReconstructionInfeasibleError as e:
            raise UnrecoverableError(str(e), stage="reconstruction") from e

    report = RecoveryReport(
        method="b",
        estimate=estimate,
        surviving_vertices=surviving,
        spectral_gap_final=gap,
        min_edge_magnitude=P,
        sigma_min=sigma_min,
        flags=flags,
        sync_zero_coords=[int(final.vertices[k]) for k in sync.flagged],
        timings=timings,
    )
    if truth is not None:
        report.score(truth)
        _signal_diagnostics(report, ens, data, truth)
        a, _ = linear_measurements(ens, truth)
        tails = final.vertices[final.graph.oriented[:, 0]]
        heads = final.vertices[final.graph.oriented[:, 1]]
        eps = sub_values - np.conj(a[tails]) * a[heads]
        observed = aligned_phase_errors(sync.phases, a[final.vertices])
        report.diagnostics["sync_observed"] = float(np.sum(observed ** 2))
        report.diagnostics["sync_bound"] = sync_error_bound(cl, P, gap, float(np.linalg.norm(eps)))
    logger.debug("Procedure B complete", extra={
        "kept": len(kept), "spectral_gap": gap, "min_edge_magnitude": P, "flags": flags,
        "aligned_error": report.aligned_error,
    })
    return report
