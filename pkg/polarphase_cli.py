#!/usr/bin/env python3
"""
Command-line interface for polarized phase retrieval.

Designs measurement ensembles, simulates intensities, runs recovery and
reproduces the simulation sweeps as CSV.
"""

import json
import os
import sys
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import click
import numpy as np
from dotenv import load_dotenv

from logging_config import RunLogger, setup_logging
from polarphase.baselines import AltProjParams, run_alternating_projections
from polarphase.config_loader import ConfigLoader
from polarphase.ensemble import (
    FrameKind,
    NoiseModel,
    NoiseSpec,
    build_ensemble,
    full_frame,
    load_ensemble,
    measure,
    random_signal,
    read_intensity_csv,
    save_ensemble,
    write_intensity_csv,
)
from polarphase.errors import UnrecoverableError
from polarphase.experiments import (
    MODES,
    SweepConfig,
    curve_samples,
    minimize_redundancy,
    run_sweep,
    save_sweep,
    vertex_count,
    expand_grid,
)
from polarphase.graphs import (
    Graph,
    certified_regular_graph,
    connected_components,
    design_a_vertex_count,
    design_b_vertex_count,
    gen_erdos_renyi,
    gen_random_regular,
    largest_component,
    induced_subgraph,
    ramanujan_redundancy_bound,
    read_edge_list,
    spectral_summary,
    write_edge_list,
)
from polarphase.recovery import PruneParams, RecoveryReport, estimate_projective_uniformity, procedure_a, procedure_b
from polarphase.version import __version__

load_dotenv('.env.local')

EXIT_UNRECOVERABLE = 3


@dataclass
class CliState:
    settings: Dict[str, Any]
    seed: int
    out: Optional[Path]
    run_logger: RunLogger


def _child_seeds(seed: int, count: int) -> Tuple[int, ...]:
    return tuple(int(s) for s in np.random.SeedSequence(seed).generate_state(count))


def _require_out(state: CliState) -> Path:
    if state.out is None:
        raise click.UsageError("This command needs --out <path>")
    return state.out


def _emit(state: CliState, text: str) -> None:
    """Write to --out when given, otherwise to stdout."""
    if state.out is None:
        click.echo(text)
        return
    with open(state.out, 'w', encoding='utf-8') as f:
        f.write(text if text.endswith('\n') else text + '\n')
    click.echo(f"Written: {state.out}", err=True)


def _fail(state: CliState, command: str, error: Exception) -> None:
    state.run_logger.error(f"{command} failed", error=str(error))
    click.echo(f"Error: {error}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(__version__, prog_name="polarphase")
@click.option('--seed', type=int, default=0, show_default=True, help='Master random seed')
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='JSON file merged over config/settings.json')
@click.option('--out', '-o', type=click.Path(dir_okay=False), help='Output file path')
@click.option('--verbose', '-v', is_flag=True, help='Enable debug logging')
@click.pass_context
def main(ctx: click.Context, seed: int, config_path: Optional[str], out: Optional[str], verbose: bool):
    """Phase retrieval from polarized intensity measurements."""
    settings = ConfigLoader().load_settings(config_path)
    log_settings = settings.get("logging", {})
    level = "DEBUG" if verbose else (os.getenv("POLARPHASE_LOG_LEVEL") or log_settings.get("level", "INFO"))
    logger = setup_logging(
        "polarphase",
        log_level=level,
        log_format=log_settings.get("format", "%(asctime)s - %(name)s - %(levelname)s - %(message)s"),
        stream=sys.stderr,
    )
    run_logger = RunLogger(logger, str(uuid.uuid4()), ctx.invoked_subcommand or "")
    ctx.obj = CliState(settings=settings, seed=seed, out=Path(out) if out else None, run_logger=run_logger)
    ctx.with_resource(run_logger)


@main.command()
@click.option('--M', 'M', type=int, required=True, help='Signal dimension')
@click.option('--model', type=click.Choice(['erdos-renyi', 'regular', 'design-a', 'design-b']),
              default='erdos-renyi', show_default=True, help='Graph model')
@click.option('--n', 'n', type=int, help='Vertex count (derived from the model when omitted)')
@click.option('--r', 'r', type=float, default=3.0, show_default=True, help='Erdős–Rényi ratio n/M')
@click.option('--c', 'c', type=float, default=8.0, show_default=True, help='Erdős–Rényi mean degree')
@click.option('--d', 'd', type=int, help='Regular degree (default from settings)')
@click.option('--frame', type=click.Choice([k.value for k in FrameKind]), help='Frame kind (default from settings)')
@click.option('--edges-out', type=click.Path(dir_okay=False), help='Also write the graph as an edge list')
@click.pass_obj
def design(state: CliState, M: int, model: str, n: Optional[int], r: float, c: float, d: Optional[int],
           frame: Optional[str], edges_out: Optional[str]):
    """Draw a graph and frame and save the ensemble (.npz)."""
    out = _require_out(state)
    design_settings = state.settings.get("design", {})
    d = d or int(design_settings.get("regular_degree", 8))
    eps = float(design_settings.get("expansion_slack", 0.1))
    max_restarts = int(design_settings.get("regular_max_restarts", 1000))
    max_draws = int(design_settings.get("certify_max_draws", 50))
    graph_seed, frame_seed = _child_seeds(state.seed, 2)
    try:
        if model == 'erdos-renyi':
            n = n or vertex_count(M, r)
            graph = gen_erdos_renyi(n, min(c / n, 1.0), seed=graph_seed)
            frame = frame or design_settings.get("frame_kind", FrameKind.GAUSSIAN.value)
        elif model == 'regular':
            if n is None:
                raise click.UsageError("--model regular needs --n")
            graph = gen_random_regular(n, d, seed=graph_seed, max_restarts=max_restarts)
            frame = frame or design_settings.get("frame_kind", FrameKind.GAUSSIAN.value)
        elif model == 'design-a':
            n = n or design_a_vertex_count(M, d, eps)
            graph, _ = certified_regular_graph(n, d, eps, seed=graph_seed, max_draws=max_draws,
                                               max_restarts=max_restarts)
            frame = frame or FrameKind.DFT.value
        else:
            n = n or design_b_vertex_count(M, float(design_settings.get("design_b_c", 4.0)))
            graph, _ = certified_regular_graph(n, d, eps, seed=graph_seed, max_draws=max_draws,
                                               max_restarts=max_restarts)
            frame = frame or FrameKind.GAUSSIAN.value

        ens = build_ensemble(graph, M, frame_kind=frame, seed=frame_seed)
        save_ensemble(ens, out)
        if edges_out:
            write_edge_list(graph, edges_out)
        state.run_logger.info("Ensemble designed", model=model, M=M, n=graph.n_vertices,
                              edges=graph.n_edges, measurements=ens.measurement_count)
        click.echo(json.dumps({
            "M": M, "n": graph.n_vertices, "edges": graph.n_edges,
            "measurements": ens.measurement_count, "redundancy": ens.measurement_count / M,
            "frame_kind": ens.frame_kind.value, "path": str(out),
        }))
    except click.ClickException:
        raise
    except Exception as e:
        _fail(state, "design", e)


@main.command('measure')
@click.argument('ensemble_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--sigma', type=float, default=0.0, show_default=True, help='Noise level')
@click.option('--noise-model', type=click.Choice([m.value for m in NoiseModel]),
              default=NoiseModel.POST_INTENSITY.value, show_default=True)
@click.option('--signal-out', type=click.Path(dir_okay=False), help='Save the random signal (.npy)')
@click.pass_obj
def measure_command(state: CliState, ensemble_path: str, sigma: float, noise_model: str, signal_out: Optional[str]):
    """Simulate intensities of a random signal and write them as CSV."""
    out = _require_out(state)
    signal_seed, noise_seed = _child_seeds(state.seed, 2)
    try:
        ens = load_ensemble(ensemble_path)
        x = random_signal(ens.dim, seed=signal_seed)
        data = measure(ens, x, NoiseSpec(noise_model, sigma), seed=noise_seed)
        write_intensity_csv(data, out)
        if signal_out:
            with open(signal_out, 'wb') as f:
                np.save(f, x)
        state.run_logger.info("Intensities simulated", M=ens.dim, sigma=sigma, noise_model=noise_model)
        click.echo(f"Intensities written: {out}", err=True)
    except Exception as e:
        _fail(state, "measure", e)


@main.command()
@click.argument('ensemble_path', type=click.Path(exists=True, dir_okay=False))
@click.argument('intensities_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--method', type=click.Choice(['a', 'b', 'altproj']), default='b', show_default=True)
@click.option('--truth', 'truth_path', type=click.Path(exists=True, dir_okay=False),
              help='True signal (.npy) for the aligned error')
@click.pass_obj
def recover(state: CliState, ensemble_path: str, intensities_path: str, method: str, truth_path: Optional[str]):
    """Recover the signal and emit a JSON report."""
    try:
        ens = load_ensemble(ensemble_path)
        data = read_intensity_csv(intensities_path, ens)
        truth = np.load(truth_path) if truth_path else None
        prune = PruneParams.from_settings(state.settings)
        if method == 'a':
            report = procedure_a(ens, data, prune, truth=truth)
        elif method == 'b':
            report = procedure_b(ens, data, prune, truth=truth)
        else:
            result = run_alternating_projections(full_frame(ens), data.as_vector(),
                                                 AltProjParams.from_settings(state.settings))
            report = RecoveryReport(method="altproj", estimate=result.estimate,
                                    diagnostics={"iterations": result.iterations})
            if not result.converged:
                report.flags.append("max_iter_reached")
            if truth is not None:
                report.score(truth)
        state.run_logger.info("Recovery finished", method=method, aligned_error=report.aligned_error,
                              flags=report.flags)
        _emit(state, json.dumps(report.to_dict(), indent=2))
    except UnrecoverableError as e:
        state.run_logger.warning("Instance unrecoverable", stage=e.stage, error=str(e))
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_UNRECOVERABLE)
    except Exception as e:
        _fail(state, "recover", e)


@main.command()
@click.option('--mode', type=click.Choice(MODES), default=MODES[0], show_default=True)
@click.option('--trials', type=int, help='Trials per cell')
@click.option('--M', 'M', type=int, multiple=True, help='Signal dimension (repeatable)')
@click.option('--r', 'r', type=float, multiple=True, help='Ratio n/M (repeatable)')
@click.option('--c', 'c', type=float, multiple=True, help='Mean degree (repeatable)')
@click.option('--sigma', type=float, help='Noise level')
@click.option('--noise-model', type=click.Choice([m.value for m in NoiseModel]))
@click.option('--method', 'methods', multiple=True,
              type=click.Choice(['a', 'b', 'altproj', 'altproj_vertex', 'oracle_vertex', 'oracle_full']))
@click.option('--workers', type=int, help='Worker processes')
@click.option('--no-timing', is_flag=True,
              help='Leave runtime_s blank. Required for byte-identical reruns with the same --seed')
@click.pass_obj
def sweep(state: CliState, mode: str, trials: Optional[int], M: Tuple[int, ...], r: Tuple[float, ...],
          c: Tuple[float, ...], sigma: Optional[float], noise_model: Optional[str], methods: Tuple[str, ...],
          workers: Optional[int], no_timing: bool):
    """Run a simulation sweep and write one CSV row per trial and method.

    Every column except runtime_s is a function of --seed and the settings.
    Pass --no-timing when comparing reruns: the CSV is then byte-identical.
    """
    out = _require_out(state)
    overrides = {
        "trials": trials,
        "M": list(M) or None,
        "r": list(r) or None,
        "c": list(c) or None,
        "sigma": sigma,
        "noise_model": noise_model,
        "methods": list(methods) or None,
        "workers": workers,
        "seed": state.seed,
    }
    try:
        cfg = SweepConfig.from_settings(state.settings, mode, overrides)
        result = run_sweep(cfg)
        meta_path = save_sweep(result, out, include_runtime=not no_timing)
        state.run_logger.info("Sweep written", mode=mode, rows=len(result.rows), path=str(out),
                              config_hash=result.metadata["config_hash"])
        click.echo(f"CSV file created: {out} ({len(result.rows)} rows), metadata: {meta_path}", err=True)
    except Exception as e:
        _fail(state, "sweep", e)


def _load_graph(path: str) -> Graph:
    if Path(path).suffix == '.npz':
        return load_ensemble(path).graph
    return read_edge_list(path)


@main.command('graph-stats')
@click.argument('graph_path', type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def graph_stats(state: CliState, graph_path: str):
    """Degrees, components and spectral gap of an edge list or ensemble."""
    try:
        graph = _load_graph(graph_path)
        components = connected_components(graph)
        stats: Dict[str, Any] = {
            "n_vertices": graph.n_vertices,
            "n_edges": graph.n_edges,
            "min_degree": int(graph.degrees.min()) if graph.n_vertices else 0,
            "max_degree": int(graph.degrees.max()) if graph.n_vertices else 0,
            "components": len(components),
            "largest_component": len(largest_component(graph)),
        }
        core = graph
        if len(components) > 1:
            core, _ = induced_subgraph(graph, largest_component(graph))
        if core.n_vertices >= 2:
            summary = spectral_summary(core)
            stats["spectral_gap"] = summary.spectral_gap if len(components) == 1 else 0.0
            stats["largest_component_gap"] = summary.spectral_gap
            stats["expansion"] = summary.expansion
        _emit(state, json.dumps(stats, indent=2))
    except Exception as e:
        _fail(state, "graph-stats", e)


@main.command('pu-estimate')
@click.argument('ensemble_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--alpha', type=float, default=0.5, show_default=True)
@click.option('--samples', type=int, default=10000, show_default=True)
@click.option('--frame', 'which', type=click.Choice(['vertex', 'full']), default='full', show_default=True)
@click.pass_obj
def pu_estimate(state: CliState, ensemble_path: str, alpha: float, samples: int, which: str):
    """Monte-Carlo upper estimate of the projective uniformity of a frame."""
    try:
        ens = load_ensemble(ensemble_path)
        phi = ens.phi_v if which == 'vertex' else full_frame(ens)
        value = estimate_projective_uniformity(phi, alpha, samples, seed=state.seed)
        _emit(state, json.dumps({"alpha": alpha, "samples": samples, "frame": which,
                                 "projective_uniformity": value}))
    except Exception as e:
        _fail(state, "pu-estimate", e)


@main.command()
@click.option('--r-start', type=float, default=1.05, show_default=True)
@click.option('--r-stop', type=float, default=4.0, show_default=True)
@click.option('--r-step', type=float, default=0.05, show_default=True)
@click.pass_obj
def curve(state: CliState, r_start: float, r_stop: float, r_step: float):
    """Phase-transition curve c(r), giant-component fraction and redundancy as CSV."""
    try:
        r_values = expand_grid({"start": r_start, "stop": r_stop, "step": r_step})
        lines = ["r,c,beta,redundancy"]
        for row in curve_samples(r_values):
            lines.append(f"{row['r']!r},{row['c']!r},{row['beta']!r},{row['redundancy']!r}")
        _emit(state, "\n".join(lines))
        r_star, best = minimize_redundancy()
        click.echo(json.dumps({
            "r_min": r_star, "redundancy_min": best, "ramanujan_bound_d6": ramanujan_redundancy_bound(6),
        }), err=True)
    except Exception as e:
        _fail(state, "curve", e)


if __name__ == '__main__':
    main()
