"""
Seeded simulation sweeps and the closed-form curves they are compared against.

Two protocols are supported:

* noiseless-grid: Erdős–Rényi graphs with n = rM vertices and p = c/n, Gaussian
  frames and Procedure A; a trial succeeds when the aligned error is below the
  success threshold.
* noisy-compare: the same ensembles with noisy intensities; Procedure B is run
  next to the phase oracles (pre-modulus noise) or next to alternating
  projections (post-intensity noise).

Every trial draws its randomness from (master seed, cell index, trial index)
so results do not depend on how trials are scheduled across workers.
"""

import csv
import hashlib
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import scipy.optimize

from .baselines import AltProjParams, alternating_projections, oracle_inputs, oracle_full_lsq, oracle_vertex_lsq
from .ensemble import NoiseModel, NoiseSpec, build_ensemble, full_frame, measure, random_signal
from .errors import ParameterError, PolarPhaseError
from .graphs import gen_erdos_renyi
from .recovery import PruneParams, align_and_error, procedure_a, procedure_b
from .version import __version__

logger = logging.getLogger(__name__)

NOISELESS_GRID = "noiseless-grid"
NOISY_COMPARE = "noisy-compare"
MODES = (NOISELESS_GRID, NOISY_COMPARE)

CSV_FIELDS = ["M", "r", "c", "trial", "seed", "method", "error", "runtime_s", "success"]

METHODS_BY_NOISE = {
    NoiseModel.PRE_MODULUS: ("b", "oracle_vertex", "oracle_full"),
    NoiseModel.POST_INTENSITY: ("b", "altproj", "altproj_vertex"),
}
KNOWN_METHODS = {"a", "b", "altproj", "altproj_vertex", "oracle_vertex", "oracle_full"}


def expand_grid(value: Any, cast: Callable = float) -> Tuple:
    """A list, a scalar, or an inclusive {"start", "stop", "step"} range."""
    if isinstance(value, dict):
        start, stop, step = (float(value[k]) for k in ("start", "stop", "step"))
        if step <= 0 or stop < start:
            raise ParameterError(f"Invalid range {value}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(cast(round(start + k * step, 10)) for k in range(count))
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    return (cast(value),)


@dataclass(frozen=True)
class SweepConfig:
    mode: str
    M: Tuple[int, ...]
    r: Tuple[float, ...]
    c: Tuple[float, ...]
    trials: int
    sigma: float = 0.0
    noise_model: NoiseModel = NoiseModel.POST_INTENSITY
    prune: PruneParams = field(default_factory=PruneParams)
    altproj: AltProjParams = field(default_factory=AltProjParams)
    seed: int = 0
    workers: int = 1
    success_threshold: float = 1e-5
    methods: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"Unknown sweep mode {self.mode!r}; expected one of {MODES}")
        if isinstance(self.noise_model, str):
            object.__setattr__(self, "noise_model", NoiseModel(self.noise_model))
        if self.trials < 1:
            raise ParameterError(f"trials must be positive (got {self.trials})")
        if not self.M or not self.r or not self.c:
            raise ParameterError("Sweep grid is empty")
        if any(m < 2 for m in self.M):
            raise ParameterError(f"Every M must be at least 2 (got {self.M})")
        if any(r < 1 for r in self.r):
            raise ParameterError(f"Every r must be at least 1 (got {self.r})")
        if any(c <= 0 for c in self.c):
            raise ParameterError(f"Every c must be positive (got {self.c})")
        if not self.sigma >= 0:
            raise ParameterError(f"sigma must be non-negative (got {self.sigma})")
        unknown = set(self.methods) - KNOWN_METHODS
        if unknown:
            raise ParameterError(f"Unknown methods {sorted(unknown)}")

    @classmethod
    def from_settings(cls, settings: Dict[str, Any], mode: str,
                      overrides: Optional[Dict[str, Any]] = None) -> "SweepConfig":
        """Build a config from the named preset in settings, then apply overrides."""
        sweeps = settings.get("sweeps", {})
        if mode not in sweeps:
            raise ParameterError(f"No sweep preset named {mode!r}")
        preset = dict(sweeps[mode])
        preset.update({k: v for k, v in (overrides or {}).items() if v is not None})
        tolerances = settings.get("tolerances", {})
        return cls(
            mode=mode,
            M=expand_grid(preset["M"], int),
            r=expand_grid(preset["r"]),
            c=expand_grid(preset["c"]),
            trials=int(preset["trials"]),
            sigma=float(preset.get("sigma", 0.0)),
            noise_model=NoiseModel(preset.get("noise_model", NoiseModel.POST_INTENSITY.value)),
            prune=PruneParams.from_settings(settings),
            altproj=AltProjParams.from_settings(settings),
            seed=int(preset.get("seed", 0)),
            workers=int(preset.get("workers", sweeps.get("workers", 1))),
            success_threshold=float(tolerances.get("success_threshold", 1e-5)),
            methods=tuple(preset.get("methods", ())),
        )

    def resolved_methods(self) -> Tuple[str, ...]:
        if self.methods:
            return self.methods
        if self.mode == NOISELESS_GRID:
            return ("a",)
        return METHODS_BY_NOISE[self.noise_model]

    def cells(self) -> List[Tuple[int, float, float]]:
        return [(M, r, c) for M in self.M for r in self.r for c in self.c]

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["noise_model"] = self.noise_model.value
        data["methods"] = list(self.resolved_methods())
        return data

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class TrialRecord:
    M: int
    r: float
    c: float
    trial: int
    seed: int
    method: str
    error: float
    runtime_s: float
    success: bool


@dataclass
class SweepResult:
    config: SweepConfig
    rows: List[TrialRecord]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def success_proportions(self) -> Dict[Tuple[int, float, float, str], float]:
        """Fraction of successful trials per (M, r, c, method)."""
        totals: Dict[Tuple[int, float, float, str], List[int]] = {}
        for row in self.rows:
            key = (row.M, row.r, row.c, row.method)
            hits = totals.setdefault(key, [0, 0])
            hits[0] += int(row.success)
            hits[1] += 1
        return {key: hits / count for key, (hits, count) in totals.items()}

    def median_errors(self) -> Dict[Tuple[int, str], float]:
        """Median error per (M, method); failed trials count as infinite error."""
        groups: Dict[Tuple[int, str], List[float]] = {}
        for row in self.rows:
            groups.setdefault((row.M, row.method), []).append(row.error if math.isfinite(row.error) else math.inf)
        return {key: float(np.median(values)) for key, values in groups.items()}

    def median_runtimes(self) -> Dict[Tuple[int, str], float]:
        groups: Dict[Tuple[int, str], List[float]] = {}
        for row in self.rows:
            groups.setdefault((row.M, row.method), []).append(row.runtime_s)
        return {key: float(np.median(values)) for key, values in groups.items()}


@dataclass(frozen=True)
class _TrialTask:
    config: SweepConfig
    cell: int
    M: int
    r: float
    c: float
    trial: int


def trial_seed(master_seed: int, cell: int, trial: int) -> int:
    """Seed for one trial, derived from the master seed and its position in the sweep."""
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(cell, trial))
    return int(sequence.generate_state(1)[0])


def vertex_count(M: int, r: float) -> int:
    """n = round(r M), at least one vertex."""
    return max(int(round(r * M)), 1)


def _simulate(task: _TrialTask, seed: int):
    graph_seed, frame_seed, signal_seed, noise_seed = (
        int(s) for s in np.random.SeedSequence(seed).generate_state(4)
    )
    n = vertex_count(task.M, task.r)
    p = min(task.c / n, 1.0)
    graph = gen_erdos_renyi(n, p, seed=graph_seed)
    ens = build_ensemble(graph, task.M, seed=frame_seed)
    x = random_signal(task.M, seed=signal_seed)
    cfg = task.config
    data = measure(ens, x, NoiseSpec(cfg.noise_model, cfg.sigma), seed=noise_seed)
    return ens, x, data


def _run_method(method: str, cfg: SweepConfig, ens, x, data) -> np.ndarray:
    if method == "a":
        return procedure_a(ens, data, cfg.prune).estimate
    if method == "b":
        return procedure_b(ens, data, cfg.prune).estimate
    if method == "altproj":
        return alternating_projections(full_frame(ens), data.as_vector(), cfg.altproj)
    if method == "altproj_vertex":
        return alternating_projections(ens.phi_v, data.vertex_z, cfg.altproj)
    y_v, y_full = oracle_inputs(ens, data, x)
    if method == "oracle_vertex":
        return oracle_vertex_lsq(ens.phi_v, y_v)
    if method == "oracle_full":
        return oracle_full_lsq(full_frame(ens), y_full)
    raise ParameterError(f"Unknown method {method!r}")


def run_trial(task: _TrialTask) -> List[TrialRecord]:
    """Simulate one instance and run every configured method on it."""
    cfg = task.config
    seed = trial_seed(cfg.seed, task.cell, task.trial)
    ens, x, data = _simulate(task, seed)
    records = []
    for method in cfg.resolved_methods():
        start = time.perf_counter()
        try:
            estimate = _run_method(method, cfg, ens, x, data)
            _, error = align_and_error(estimate, x)
        except PolarPhaseError as e:
            logger.debug("Trial failed", extra={
                "method": method, "M": task.M, "r": task.r, "c": task.c, "trial": task.trial, "error": str(e),
            })
            error = math.nan
        runtime = time.perf_counter() - start
        success = bool(math.isfinite(error) and error < cfg.success_threshold)
        records.append(TrialRecord(
            M=task.M, r=task.r, c=task.c, trial=task.trial, seed=seed, method=method,
            error=error, runtime_s=runtime, success=success,
        ))
    return records


def _run_sweep(cfg: SweepConfig) -> SweepResult:
    tasks = [
        _TrialTask(config=cfg, cell=cell, M=M, r=r, c=c, trial=trial)
        for cell, (M, r, c) in enumerate(cfg.cells())
        for trial in range(cfg.trials)
    ]
    logger.info("Sweep started", extra={
        "mode": cfg.mode, "cells": len(cfg.cells()), "trials": cfg.trials, "workers": cfg.workers,
    })
    start = time.perf_counter()
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            batches = list(pool.map(run_trial, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    else:
        batches = [run_trial(task) for task in tasks]
    rows = [row for batch in batches for row in batch]
    result = SweepResult(config=cfg, rows=rows, metadata=sweep_metadata(cfg))
    logger.info("Sweep finished", extra={
        "mode": cfg.mode, "rows": len(rows), "elapsed_s": time.perf_counter() - start,
    })
    return result


def run_noiseless_grid(cfg: SweepConfig) -> SweepResult:
    if cfg.mode != NOISELESS_GRID:
        cfg = replace(cfg, mode=NOISELESS_GRID)
    return _run_sweep(cfg)


def run_noisy_compare(cfg: SweepConfig) -> SweepResult:
    if cfg.mode != NOISY_COMPARE:
        cfg = replace(cfg, mode=NOISY_COMPARE)
    return _run_sweep(cfg)


def run_sweep(cfg: SweepConfig) -> SweepResult:
    """Dispatch on cfg.mode."""
    if cfg.mode == NOISELESS_GRID:
        return run_noiseless_grid(cfg)
    return run_noisy_compare(cfg)


def sweep_metadata(cfg: SweepConfig) -> Dict[str, Any]:
    """Contents of the '<out>.meta.json' sidecar."""
    return {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "noise_model": cfg.noise_model.value,
        "sigma": cfg.sigma,
        "methods": list(cfg.resolved_methods()),
        "config": cfg.to_dict(),
    }


def generate_sweep_csv(result: SweepResult, include_runtime: bool = True) -> str:
    """
    CSV text for a sweep, one row per (trial, method).

    Runtimes are left blank when include_runtime is False so that repeated
    runs with the same seed produce identical text.
    """
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in result.rows:
        writer.writerow([
            row.M,
            repr(row.r),
            repr(row.c),
            row.trial,
            row.seed,
            row.method,
            repr(row.error),
            repr(row.runtime_s) if include_runtime else "",
            int(row.success),
        ])
    return output.getvalue()


def save_sweep(result: SweepResult, output_path: Union[str, Path], include_runtime: bool = True) -> Path:
    """Write the CSV and its '<out>.meta.json' sidecar; returns the sidecar path."""
    output_path = Path(output_path)
    with open(output_path, "w", newline="", encoding="utf-8") as csvfile:
        csvfile.write(generate_sweep_csv(result, include_runtime))
    meta_path = output_path.with_name(output_path.name + ".meta.json")
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(result.metadata, f, indent=2, default=list)
    return meta_path


def phase_transition_curve(r: float) -> float:
    """Mean degree c = r log(r / (r - 1)) at which the giant component reaches n / r."""
    if r <= 1:
        raise ParameterError(f"r must exceed 1 (got {r})")
    return r * math.log(r / (r - 1.0))


def giant_component_fraction(c: float, xtol: float = 1e-15) -> float:
    """Solution beta in (0, 1) of beta + exp(-beta c) = 1, or 0 when c <= 1."""
    if c <= 1:
        return 0.0

    def residual(beta: float) -> float:
        return beta + math.exp(-beta * c) - 1.0

    # residual(1 - 1/c) <= 0 since e^{c-1} >= c
    lower = 1.0 - 1.0 / c
    if residual(lower) >= 0:
        return lower
    return float(scipy.optimize.bisect(residual, lower, 1.0, xtol=xtol))


def redundancy(r: float) -> float:
    """Measurement redundancy N/M = r (1 + 1.5 r log(r / (r - 1))) on the curve."""
    return r * (1.0 + 1.5 * phase_transition_curve(r))


def minimize_redundancy() -> Tuple[float, float]:
    """Golden-section search for the r minimizing redundancy on (1, 4]."""
    result = scipy.optimize.minimize_scalar(redundancy, bracket=(1.05, 1.3, 4.0), method="golden")
    return float(result.x), float(result.fun)


def curve_samples(r_values: Iterable[float]) -> List[Dict[str, float]]:
    """c(r), the giant-component fraction at c(r), and N/M for each r."""
    rows = []
    for r in r_values:
        c = phase_transition_curve(r)
        rows.append({"r": r, "c": c, "beta": giant_component_fraction(c), "redundancy": redundancy(r)})
    return rows
