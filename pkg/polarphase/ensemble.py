"""
Measurement ensembles: vertex frames, polarization edge vectors and simulated
intensity measurements.

Inner products follow <x, phi> = phi^H x, so the edge vector phi_i + zeta^k phi_j
measures |<x, phi_i> + zeta^{-k} <x, phi_j>|^2.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .errors import EdgeIndexError, ParameterError
from .graphs import Graph

logger = logging.getLogger(__name__)

# e^{2 pi i / 3} from its exact coordinates
ZETA = complex(-0.5, math.sqrt(3.0) / 2.0)
ZETA_POWERS = np.array([1.0 + 0.0j, ZETA, ZETA.conjugate()])


class FrameKind(Enum):
    GAUSSIAN = "gaussian"
    DFT = "dft"


class NoiseModel(Enum):
    """Where noise enters: after the modulus squared, or before it."""
    POST_INTENSITY = "post-intensity"
    PRE_MODULUS = "pre-modulus"


@dataclass(frozen=True)
class NoiseSpec:
    model: NoiseModel = NoiseModel.POST_INTENSITY
    sigma: float = 0.0

    def __post_init__(self):
        if isinstance(self.model, str):
            object.__setattr__(self, "model", NoiseModel(self.model))
        if not self.sigma >= 0:
            raise ParameterError(f"Noise level must be non-negative (got {self.sigma})")


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    """Vertex frame on the columns of phi_v plus the graph that pairs them."""

    dim: int
    graph: Graph
    phi_v: np.ndarray
    frame_kind: FrameKind = FrameKind.GAUSSIAN
    seed: Optional[int] = None

    def __post_init__(self):
        if self.phi_v.shape != (self.dim, self.graph.n_vertices):
            raise ParameterError(
                f"Frame shape {self.phi_v.shape} does not match (M={self.dim}, n={self.graph.n_vertices})"
            )
        if not np.all(np.isfinite(self.phi_v)):
            raise ParameterError("Frame has non-finite entries")

    @property
    def zeta(self) -> complex:
        return ZETA

    @property
    def n_vertices(self) -> int:
        return self.graph.n_vertices

    @property
    def measurement_count(self) -> int:
        """N = |V| + 3|E|."""
        return self.graph.n_vertices + 3 * self.graph.n_edges


@dataclass(frozen=True, eq=False)
class IntensityData:
    """Intensities indexed by vertex and by (edge, k).

    The injected noise is kept alongside when the data was simulated so that
    phase oracles can be fed the same perturbation.
    """

    vertex_z: np.ndarray
    edge_z: np.ndarray
    noise_model: NoiseModel = NoiseModel.POST_INTENSITY
    sigma: float = 0.0
    vertex_noise: Optional[np.ndarray] = None
    edge_noise: Optional[np.ndarray] = None

    def as_vector(self) -> np.ndarray:
        """Intensities in full-frame order: vertices, then edges with k fastest."""
        return np.concatenate([self.vertex_z, self.edge_z.reshape(-1)])

    def noise_vector(self) -> Optional[np.ndarray]:
        if self.vertex_noise is None or self.edge_noise is None:
            return None
        return np.concatenate([self.vertex_noise, self.edge_noise.reshape(-1)])

    def check_aligned(self, ens: MeasurementEnsemble) -> None:
        if self.vertex_z.shape != (ens.n_vertices,) or self.edge_z.shape != (ens.graph.n_edges, 3):
            raise EdgeIndexError(
                f"Data shapes {self.vertex_z.shape}/{self.edge_z.shape} do not match "
                f"ensemble with {ens.n_vertices} vertices and {ens.graph.n_edges} edges"
            )


def gaussian_frame(M: int, n: int, seed=None) -> np.ndarray:
    """M x n matrix with independent CN(0, 1/M) entries."""
    if M < 1 or n < 1:
        raise ParameterError(f"Frame dimensions must be positive (got M={M}, n={n})")
    rng = np.random.default_rng(seed)
    scale = math.sqrt(1.0 / (2.0 * M))
    return scale * (rng.standard_normal((M, n)) + 1j * rng.standard_normal((M, n)))


def dft_full_spark_frame(M: int, n: int) -> np.ndarray:
    """First M rows of the n x n DFT, columns scaled to unit norm."""
    if M < 1 or n < M:
        raise ParameterError(f"Need n >= M >= 1 (got M={M}, n={n})")
    m = np.arange(M)[:, None]
    j = np.arange(n)[None, :]
    return np.exp(-2j * np.pi * m * j / n) / math.sqrt(M)


def random_signal(M: int, seed=None) -> np.ndarray:
    """Signal with independent CN(0, 1/M) entries."""
    return gaussian_frame(M, 1, seed)[:, 0]


def build_ensemble(graph: Graph, M: int, frame_kind: Union[FrameKind, str] = FrameKind.GAUSSIAN,
                   seed: Optional[int] = None) -> MeasurementEnsemble:
    """Draw the vertex frame for `graph` (Gaussian or full-spark DFT) and bundle the two."""
    frame_kind = FrameKind(frame_kind)
    if frame_kind is FrameKind.GAUSSIAN:
        phi_v = gaussian_frame(M, graph.n_vertices, seed)
    else:
        phi_v = dft_full_spark_frame(M, graph.n_vertices)
    return MeasurementEnsemble(dim=M, graph=graph, phi_v=phi_v, frame_kind=frame_kind, seed=seed)


def edge_vector(ens: MeasurementEnsemble, edge: Tuple[int, int], k: int) -> np.ndarray:
    """phi_tail + zeta^k phi_head for the stored orientation of the edge."""
    if k not in (0, 1, 2):
        raise ParameterError(f"k must be 0, 1 or 2 (got {k})")
    index = ens.graph.find_edge(int(edge[0]), int(edge[1]))
    if index is None:
        raise EdgeIndexError(f"Edge {tuple(edge)} is not in the graph")
    tail, head = ens.graph.edges[index]
    return ens.phi_v[:, tail] + ZETA_POWERS[k] * ens.phi_v[:, head]


def edge_frame(ens: MeasurementEnsemble) -> np.ndarray:
    """All 3|E| edge vectors as columns, ordered by edge then k."""
    if ens.graph.n_edges == 0:
        return np.zeros((ens.dim, 0), dtype=complex)
    tails = ens.phi_v[:, ens.graph.oriented[:, 0]]
    heads = ens.phi_v[:, ens.graph.oriented[:, 1]]
    cols = tails[:, :, None] + ZETA_POWERS[None, None, :] * heads[:, :, None]
    return cols.reshape(ens.dim, -1)


def full_frame(ens: MeasurementEnsemble) -> np.ndarray:
    """[Phi_V | Phi_E], the M x N matrix of every measurement vector."""
    return np.hstack([ens.phi_v, edge_frame(ens)])


def linear_measurements(ens: MeasurementEnsemble, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Noiseless <x, phi> for vertices (n,) and edges (|E|, 3)."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (ens.dim,):
        raise ParameterError(f"Signal has shape {x.shape}, expected ({ens.dim},)")
    a = ens.phi_v.conj().T @ x
    if ens.graph.n_edges == 0:
        return a, np.zeros((0, 3), dtype=complex)
    tails = a[ens.graph.oriented[:, 0]]
    heads = a[ens.graph.oriented[:, 1]]
    b = tails[:, None] + ZETA_POWERS.conj()[None, :] * heads[:, None]
    return a, b


def measure(ens: MeasurementEnsemble, x: np.ndarray, noise: Optional[NoiseSpec] = None,
            seed=None) -> IntensityData:
    """Simulate intensity measurements of x under the given noise model.

    post-intensity: z = |<x, phi>|^2 + nu with nu real N(0, sigma^2 / M).
    pre-modulus:    z = |<x, phi> + nu|^2 with nu complex CN(0, sigma^2 / M).
    """
    noise = noise or NoiseSpec()
    a, b = linear_measurements(ens, x)
    n_edges = ens.graph.n_edges

    if noise.sigma == 0:
        return IntensityData(
            vertex_z=np.abs(a) ** 2,
            edge_z=np.abs(b) ** 2,
            noise_model=noise.model,
            sigma=0.0,
            vertex_noise=np.zeros(a.shape),
            edge_noise=np.zeros(b.shape),
        )

    rng = np.random.default_rng(seed)
    if noise.model is NoiseModel.POST_INTENSITY:
        std = noise.sigma / math.sqrt(ens.dim)
        nu_v = std * rng.standard_normal(a.shape)
        nu_e = std * rng.standard_normal((n_edges, 3))
        vertex_z = np.abs(a) ** 2 + nu_v
        edge_z = np.abs(b) ** 2 + nu_e
    else:
        std = noise.sigma / math.sqrt(2.0 * ens.dim)
        nu_v = std * (rng.standard_normal(a.shape) + 1j * rng.standard_normal(a.shape))
        nu_e = std * (rng.standard_normal((n_edges, 3)) + 1j * rng.standard_normal((n_edges, 3)))
        vertex_z = np.abs(a + nu_v) ** 2
        edge_z = np.abs(b + nu_e) ** 2

    return IntensityData(
        vertex_z=vertex_z,
        edge_z=edge_z,
        noise_model=noise.model,
        sigma=noise.sigma,
        vertex_noise=nu_v,
        edge_noise=nu_e,
    )


def save_ensemble(ens: MeasurementEnsemble, path: Union[str, Path]) -> None:
    """Write the frame and graph to .npz with a JSON header."""
    header = {
        "M": ens.dim,
        "n": ens.n_vertices,
        "seed": ens.seed,
        "frame_kind": ens.frame_kind.value,
    }
    with open(path, "wb") as f:
        np.savez(
            f,
            header=np.array(json.dumps(header)),
            phi_v=ens.phi_v,
            edges=ens.graph.oriented,
        )


def load_ensemble(path: Union[str, Path]) -> MeasurementEnsemble:
    """Load an ensemble saved by save_ensemble."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        graph = Graph.from_edges(header["n"], data["edges"].tolist())
        return MeasurementEnsemble(
            dim=int(header["M"]),
            graph=graph,
            phi_v=np.array(data["phi_v"]),
            frame_kind=FrameKind(header["frame_kind"]),
            seed=header.get("seed"),
        )


def write_intensity_csv(data: IntensityData, path: Union[str, Path]) -> None:
    """Rows 'kind,index,k,value'; a leading comment records the noise model."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# noise_model={data.noise_model.value};sigma={data.sigma!r}\n")
        writer = csv.writer(f)
        writer.writerow(["kind", "index", "k", "value"])
        for i, z in enumerate(data.vertex_z):
            writer.writerow(["v", i, "", repr(float(z))])
        for e, row in enumerate(data.edge_z):
            for k, z in enumerate(row):
                writer.writerow(["e", e, k, repr(float(z))])


def read_intensity_csv(path: Union[str, Path], ens: Optional[MeasurementEnsemble] = None) -> IntensityData:
    """
    Parse 'kind,index,k,value' rows back into IntensityData.

    Args:
        path: CSV written by write_intensity_csv
        ens: When given, the parsed arrays are checked against its graph

    Returns:
        IntensityData without stored noise; the header sets noise_model and sigma
    """
    noise_model = NoiseModel.POST_INTENSITY
    sigma = 0.0
    vertex = {}
    edge = {}
    with open(path, "r", newline="", encoding="utf-8") as f:
        lines = f.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for item in line[1:].strip().split(";"):
                key, _, value = item.partition("=")
                if key == "noise_model":
                    noise_model = NoiseModel(value)
                elif key == "sigma":
                    sigma = float(value)
        elif line.strip():
            body.append(line)
    for row in csv.DictReader(body):
        if row["kind"] == "v":
            vertex[int(row["index"])] = float(row["value"])
        elif row["kind"] == "e":
            edge[(int(row["index"]), int(row["k"]))] = float(row["value"])
        else:
            raise ParameterError(f"Unknown row kind {row['kind']!r} in {path}")

    n_vertices = max(vertex) + 1 if vertex else 0
    n_edges = max(e for e, _ in edge) + 1 if edge else 0
    try:
        vertex_z = np.array([vertex[i] for i in range(n_vertices)])
        edge_z = np.array([[edge[(e, k)] for k in range(3)] for e in range(n_edges)]).reshape(n_edges, 3)
    except KeyError as e:
        raise EdgeIndexError(f"Missing measurement {e} in {path}") from e
    data = IntensityData(vertex_z=vertex_z, edge_z=edge_z, noise_model=noise_model, sigma=sigma)
    if ens is not None:
        data.check_aligned(ens)
    return data
