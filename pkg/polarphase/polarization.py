"""
Polarization identity with cube roots of unity, and relative phases along edges.

For any complex a, b:  conj(a) b = (1/3) sum_k zeta^k |a + zeta^{-k} b|^2.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .ensemble import ZETA_POWERS, IntensityData, MeasurementEnsemble
from .errors import ZeroEdgeError


@dataclass(frozen=True)
class EdgeEstimate:
    """Estimate of conj(<x, phi_tail>) <x, phi_head> for one oriented edge."""

    edge: Tuple[int, int]
    value: complex

    @property
    def magnitude(self) -> float:
        return abs(self.value)

    def reversed(self) -> "EdgeEstimate":
        return EdgeEstimate(edge=(self.edge[1], self.edge[0]), value=self.value.conjugate())


def polarize(z0: float, z1: float, z2: float) -> complex:
    """(1/3)(z0 + zeta z1 + zeta^2 z2)."""
    return complex((ZETA_POWERS[0] * z0 + ZETA_POWERS[1] * z1 + ZETA_POWERS[2] * z2) / 3.0)


def polarize_array(edge_z: np.ndarray) -> np.ndarray:
    """Row-wise polarization of an (|E|, 3) intensity array."""
    return (np.asarray(edge_z, dtype=float) @ ZETA_POWERS) / 3.0


def edge_values(ens: MeasurementEnsemble, data: IntensityData) -> np.ndarray:
    """Polarized edge values, aligned with ens.graph.edges."""
    data.check_aligned(ens)
    return polarize_array(data.edge_z)


def edge_estimates(ens: MeasurementEnsemble, data: IntensityData) -> List[EdgeEstimate]:
    values = edge_values(ens, data)
    return [EdgeEstimate(edge=edge, value=complex(v)) for edge, v in zip(ens.graph.edges, values)]


def relative_phase(e: EdgeEstimate) -> complex:
    """value / |value|; zero edges must be pruned before this point."""
    magnitude = e.magnitude
    if magnitude == 0:
        raise ZeroEdgeError(f"Edge {e.edge} has zero magnitude")
    return e.value / magnitude
