"""
Phase retrieval from polarized intensity measurements.
"""

from .version import __version__
from .errors import (
    PolarPhaseError,
    ParameterError,
    InfeasibleParametersError,
    RetryExhaustedError,
    DegeneracyError,
    EdgeIndexError,
    ZeroEdgeError,
    ReconstructionInfeasibleError,
    UnrecoverableError,
)
from .config_loader import ConfigLoader
from .graphs import Graph, SpectralSummary, gen_erdos_renyi, gen_random_regular, spectral_summary
from .ensemble import FrameKind, IntensityData, MeasurementEnsemble, NoiseModel, NoiseSpec, build_ensemble, measure
from .polarization import EdgeEstimate, edge_estimates, polarize
from .spectral import angular_synchronization, connection_laplacian, spectral_cluster
from .recovery import PruneParams, RecoveryReport, align_and_error, procedure_a, procedure_b
from .baselines import AltProjParams, alternating_projections, oracle_full_lsq, oracle_vertex_lsq
from .experiments import SweepConfig, SweepResult, run_noiseless_grid, run_noisy_compare

__all__ = [
    '__version__',
    'PolarPhaseError', 'ParameterError', 'InfeasibleParametersError', 'RetryExhaustedError',
    'DegeneracyError', 'EdgeIndexError', 'ZeroEdgeError', 'ReconstructionInfeasibleError',
    'UnrecoverableError',
    'ConfigLoader',
    'Graph', 'SpectralSummary', 'gen_erdos_renyi', 'gen_random_regular', 'spectral_summary',
    'FrameKind', 'IntensityData', 'MeasurementEnsemble', 'NoiseModel', 'NoiseSpec', 'build_ensemble', 'measure',
    'EdgeEstimate', 'edge_estimates', 'polarize',
    'angular_synchronization', 'connection_laplacian', 'spectral_cluster',
    'PruneParams', 'RecoveryReport', 'align_and_error', 'procedure_a', 'procedure_b',
    'AltProjParams', 'alternating_projections', 'oracle_full_lsq', 'oracle_vertex_lsq',
    'SweepConfig', 'SweepResult', 'run_noiseless_grid', 'run_noisy_compare',
]
