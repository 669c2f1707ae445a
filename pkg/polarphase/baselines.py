"""
Comparison methods: alternating projections and the least-squares phase oracles.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from .ensemble import IntensityData, MeasurementEnsemble, full_frame, linear_measurements
from .errors import ParameterError, ReconstructionInfeasibleError
from .recovery import RANK_TOL, least_squares_reconstruct

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AltProjParams:
    """Stop once an iteration moves y by less than move_tol, or after max_iter."""

    max_iter: int = 100
    move_tol: float = 1e-3

    def __post_init__(self):
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be positive (got {self.max_iter})")
        if not self.move_tol > 0:
            raise ParameterError(f"move_tol must be positive (got {self.move_tol})")

    @classmethod
    def from_settings(cls, settings: Dict[str, Any]) -> "AltProjParams":
        section = settings.get("alternating_projections", {})
        return cls(
            max_iter=int(section.get("max_iter", 100)),
            move_tol=float(section.get("move_tol", 1e-3)),
        )


@dataclass(frozen=True, eq=False)
class AltProjResult:
    estimate: np.ndarray
    iterations: int
    converged: bool


class RangeProjector:
    """Orthogonal projection onto the column space of phi^H.

    Factorizes phi^H = QR once so that every projection and the final solve
    reuse the same factors.
    """

    def __init__(self, phi: np.ndarray, rank_tol: float = RANK_TOL):
        M, n = phi.shape
        if n < M:
            raise ReconstructionInfeasibleError(f"{n} frame vectors cannot span dimension {M}", sigma_min=0.0)
        self.q, self.r = scipy.linalg.qr(phi.conj().T, mode="economic")
        diag = np.abs(np.diag(self.r))
        if diag.min() <= rank_tol * max(diag.max(), 1.0):
            raise ReconstructionInfeasibleError("Frame is rank deficient", sigma_min=float(diag.min()))

    def project(self, y: np.ndarray) -> np.ndarray:
        return self.q @ (self.q.conj().T @ y)

    def solve(self, y: np.ndarray) -> np.ndarray:
        """Least-squares x with phi^H x closest to y."""
        return scipy.linalg.solve_triangular(self.r, self.q.conj().T @ y)


def run_alternating_projections(phi: np.ndarray, z: np.ndarray, params: Optional[AltProjParams] = None,
                                y0: Optional[np.ndarray] = None) -> AltProjResult:
    """Alternate between the range of phi^H and the set of vectors with magnitudes sqrt(z).

    Starts from positive phases unless y0 is given. Where the projected entry
    is zero the previous phase is kept.
    """
    params = params or AltProjParams()
    z = np.asarray(z, dtype=float)
    if z.shape != (phi.shape[1],):
        raise ParameterError(f"Need one intensity per frame vector ({phi.shape[1]}), got shape {z.shape}")
    b = np.sqrt(np.maximum(z, 0.0))
    projector = RangeProjector(phi)

    y = b.astype(complex) if y0 is None else np.asarray(y0, dtype=complex)
    converged = False
    iterations = 0
    for iterations in range(1, params.max_iter + 1):
        p = projector.project(y)
        magnitude = np.abs(p)
        phase = np.exp(1j * np.angle(y))
        nonzero = magnitude > 0
        phase[nonzero] = p[nonzero] / magnitude[nonzero]
        y_new = b * phase
        move = float(np.linalg.norm(y_new - y))
        y = y_new
        if move < params.move_tol:
            converged = True
            break

    estimate = projector.solve(projector.project(y))
    logger.debug("Alternating projections finished", extra={
        "iterations": iterations, "converged": converged, "n_measurements": int(z.size),
    })
    return AltProjResult(estimate=estimate, iterations=iterations, converged=converged)


def alternating_projections(phi: np.ndarray, z: np.ndarray, params: Optional[AltProjParams] = None,
                            y0: Optional[np.ndarray] = None) -> np.ndarray:
    """Estimate only; see run_alternating_projections for iteration details."""
    return run_alternating_projections(phi, z, params, y0).estimate


def oracle_vertex_lsq(phi_v: np.ndarray, linear_meas: np.ndarray) -> np.ndarray:
    """Least squares from the vertex measurements with their true phases."""
    return least_squares_reconstruct(phi_v, linear_meas)


def oracle_full_lsq(phi_full: np.ndarray, linear_meas: np.ndarray) -> np.ndarray:
    """Least squares from every measurement with its true phase."""
    return least_squares_reconstruct(phi_full, linear_meas)


def oracle_inputs(ens: MeasurementEnsemble, data: IntensityData, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Phi_V^H x + nu_V and Phi^H x + nu using the noise injected into data.

    Data read back from disk carries no noise, in which case the oracles see
    clean linear measurements.
    """
    a, b = linear_measurements(ens, x)
    y_full = np.concatenate([a, b.reshape(-1)])
    noise = data.noise_vector()
    if noise is not None:
        y_full = y_full + noise
    return y_full[:ens.n_vertices], y_full


def oracle_estimates(ens: MeasurementEnsemble, data: IntensityData, x: np.ndarray) -> Dict[str, np.ndarray]:
    """Estimates from both oracles, keyed by method name."""
    y_v, y_full = oracle_inputs(ens, data, x)
    return {
        "oracle_vertex": oracle_vertex_lsq(ens.phi_v, y_v),
        "oracle_full": oracle_full_lsq(full_frame(ens), y_full),
    }
