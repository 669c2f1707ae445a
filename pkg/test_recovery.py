"""
Unit tests for the pruning steps, least-squares reconstruction and both
recovery procedures.
"""

import json
import math
import os
import time
import unittest

import numpy as np

from polarphase.ensemble import (
    IntensityData,
    MeasurementEnsemble,
    NoiseModel,
    NoiseSpec,
    build_ensemble,
    measure,
    random_signal,
)
from polarphase.baselines import oracle_estimates
from polarphase.errors import (
    InfeasibleParametersError,
    ParameterError,
    ReconstructionInfeasibleError,
    UnrecoverableError,
)
from polarphase.graphs import (
    GAP_TOL,
    Graph,
    connected_components,
    connectivity_threshold,
    gen_erdos_renyi,
    gen_random_regular,
    induced_subgraph,
    spectral_summary,
)
from polarphase.recovery import (
    PruneParams,
    RecoveryReport,
    align_and_error,
    estimate_projective_uniformity,
    least_squares_reconstruct,
    least_squares_with_sigma,
    procedure_a,
    procedure_b,
    prune_connectivity,
    prune_reliability,
    remove_large_vertices,
    report_to_json,
    error_to_nsr_ratio,
)

SLOW = os.getenv("POLARPHASE_SLOW_TESTS") == "1"


def two_triangles_with_bridge():
    return Graph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)])


def er_instance(M, r, c, seed, sigma=0.0, model=NoiseModel.POST_INTENSITY):
    n = int(round(r * M))
    g = gen_erdos_renyi(n, min(c / n, 1.0), seed=seed)
    ens = build_ensemble(g, M, seed=seed + 10000)
    x = random_signal(M, seed=seed + 20000)
    data = measure(ens, x, NoiseSpec(model, sigma), seed=seed + 30000)
    return ens, x, data


class TestPruneParams(unittest.TestCase):

    def test_defaults(self):
        params = PruneParams()
        self.assertEqual((params.alpha, params.tau, params.kappa), (0.9925, 0.1, 0.9))

    def test_invalid_values(self):
        for kwargs in ({"alpha": 1.0}, {"alpha": 0.0}, {"tau": 0.0}, {"kappa": 1.5}, {"zero_tol": -1.0}):
            with self.assertRaises(ParameterError):
                PruneParams(**kwargs)

    def test_from_settings_ignores_unknown_keys(self):
        settings = {"prune": {"alpha": 0.9, "tau": 0.2, "kappa": 0.8, "zero_tol": 0.0, "extra": 1}}
        params = PruneParams.from_settings(settings)
        self.assertEqual(params, PruneParams(alpha=0.9, tau=0.2, kappa=0.8, zero_tol=0.0))


class TestPruneReliability(unittest.TestCase):

    def test_no_rounds_keeps_everything(self):
        g = gen_erdos_renyi(100, 0.05, seed=1)
        sub = prune_reliability(g, np.ones(g.n_edges), 0.9925)
        self.assertEqual(sub.graph, g)
        np.testing.assert_array_equal(sub.vertices, np.arange(100))

    def test_path_deletes_weakest_edges_first(self):
        g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
        sub = prune_reliability(g, [0.5, 0.1, 2.0, 0.3], alpha=0.6)
        self.assertEqual(sub.vertices.tolist(), [0])
        self.assertEqual(sub.flags, ())

    def test_ties_go_to_lower_edge_index(self):
        g = Graph.from_edges(4, [(0, 1), (2, 3)])
        sub = prune_reliability(g, [1.0, 1.0], alpha=0.5)
        self.assertEqual(sub.vertices.tolist(), [])
        sub = prune_reliability(g, [1.0, 1.0], alpha=0.75)
        self.assertEqual(sub.vertices.tolist(), [2, 3])

    def test_early_stop_is_flagged(self):
        g = Graph.from_edges(4, [(0, 1)])
        sub = prune_reliability(g, [1.0], alpha=0.5)
        self.assertEqual(sub.vertices.tolist(), [2, 3])
        self.assertIn("reliability_early_stop", sub.flags)

    def test_invalid_arguments(self):
        g = Graph.from_edges(3, [(0, 1)])
        with self.assertRaises(ParameterError):
            prune_reliability(g, [1.0], alpha=1.0)
        with self.assertRaises(ParameterError):
            prune_reliability(g, [1.0, 2.0], alpha=0.5)


class TestPruneConnectivity(unittest.TestCase):

    def test_bridge_graph_loses_a_triangle(self):
        sub = prune_connectivity(two_triangles_with_bridge(), tau=0.3)
        self.assertIn(sub.vertices.tolist(), ([0, 1, 2], [3, 4, 5]))
        self.assertAlmostEqual(spectral_summary(sub.graph).spectral_gap, 1.5)

    def test_gap_already_large_enough(self):
        g = two_triangles_with_bridge()
        sub = prune_connectivity(g, tau=0.2)
        self.assertEqual(sub.graph, g)

    def test_disconnected_input_keeps_largest_component(self):
        g = Graph.from_edges(5, [(0, 1), (2, 3), (3, 4), (2, 4)])
        sub = prune_connectivity(g, tau=0.1)
        self.assertEqual(sub.vertices.tolist(), [2, 3, 4])

    def test_random_inputs_end_connected_with_gap(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(4, 60))
            c = float(rng.uniform(1.5, 5.0))
            g = gen_erdos_renyi(n, min(c / n, 1.0), seed=int(rng.integers(2 ** 31)))
            if g.n_edges == 0:
                continue
            sub = prune_connectivity(g, tau=0.1)
            self.assertTrue(set(sub.vertices.tolist()) <= set(range(n)))
            if "single_vertex" in sub.flags:
                self.assertEqual(sub.graph.n_vertices, 1)
                continue
            self.assertEqual(len(connected_components(sub.graph)), 1)
            self.assertGreaterEqual(spectral_summary(sub.graph).spectral_gap, 0.1 - GAP_TOL)

    def test_invalid_tau(self):
        with self.assertRaises(ParameterError):
            prune_connectivity(two_triangles_with_bridge(), tau=0.0)

    @unittest.skipUnless(SLOW, "set POLARPHASE_SLOW_TESTS=1")
    def test_keeps_guaranteed_fraction_after_deletions(self):
        n, d, p, q = 300, 60, 0.95, 2.0 / 3.0
        g = gen_random_regular(n, d, seed=3)
        lambda2 = spectral_summary(g).spectral_gap
        try:
            tau = connectivity_threshold(p, q, lambda2)
        except InfeasibleParametersError:
            self.skipTest(f"drawn graph has gap {lambda2:.3f}")
        rng = np.random.default_rng(4)
        for _ in range(20):
            deleted = rng.choice(n, size=int(round((1 - p) * n)), replace=False)
            remaining, _ = induced_subgraph(g, np.setdiff1d(np.arange(n), deleted))
            sub = prune_connectivity(remaining, tau)
            self.assertGreaterEqual(sub.graph.n_vertices, q * n)


class TestRemoveLargeVertices(unittest.TestCase):

    def test_keeps_smallest_intensities(self):
        kept, short = remove_large_vertices([0, 1, 2, 3], [4.0, 1.0, 3.0, 2.0], kappa=0.5, n_original=4)
        self.assertEqual(kept, [1, 3])
        self.assertFalse(short)

    def test_short_when_target_unreachable(self):
        kept, short = remove_large_vertices([2, 0], [1.0, 2.0, 3.0, 4.0], kappa=0.9, n_original=4)
        self.assertEqual(kept, [0, 2])
        self.assertTrue(short)


class TestLeastSquares(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        self.phi = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
        self.x = rng.standard_normal(3) + 1j * rng.standard_normal(3)

    def test_consistent_system_is_solved(self):
        x, sigma_min = least_squares_with_sigma(self.phi, self.phi.conj().T @ self.x)
        np.testing.assert_allclose(x, self.x, atol=1e-12)
        self.assertAlmostEqual(sigma_min, float(np.linalg.svd(self.phi, compute_uv=False).min()))

    def test_square_invertible_system(self):
        phi = np.array([[1.0, 1.0], [0.0, 1j]])
        y = np.array([2.0, 1.0 + 1.0j])
        x = least_squares_reconstruct(phi, y)
        np.testing.assert_allclose(phi.conj().T @ x, y, atol=1e-12)

    def test_residual_is_orthogonal_to_range(self):
        rng = np.random.default_rng(1)
        y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        x = least_squares_reconstruct(self.phi, y)
        residual = y - self.phi.conj().T @ x
        np.testing.assert_allclose(self.phi @ residual, np.zeros(3), atol=1e-10)

    def test_rank_deficient_frame(self):
        phi = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]], dtype=complex)
        with self.assertRaises(ReconstructionInfeasibleError) as ctx:
            least_squares_reconstruct(phi, np.ones(3))
        self.assertIsNotNone(ctx.exception.sigma_min)

    def test_too_few_columns(self):
        with self.assertRaises(ReconstructionInfeasibleError):
            least_squares_reconstruct(self.phi[:, :2], np.ones(2))

    def test_wrong_coefficient_shape(self):
        with self.assertRaises(ParameterError):
            least_squares_reconstruct(self.phi, np.ones(7))


class TestAlignAndError(unittest.TestCase):

    def setUp(self):
        self.x = random_signal(5, seed=3)

    def test_pure_phase_rotation(self):
        theta, error = align_and_error(1j * self.x, self.x)
        self.assertAlmostEqual(theta, math.pi / 2)
        self.assertAlmostEqual(error, 0.0, places=12)

    def test_zero_estimate(self):
        theta, error = align_and_error(np.zeros(5), self.x)
        self.assertEqual(theta, 0.0)
        self.assertAlmostEqual(error, 1.0)

    def test_matches_grid_search(self):
        xt = random_signal(5, seed=4)
        _, error = align_and_error(xt, self.x)
        grid = np.linspace(0, 2 * np.pi, 10000, endpoint=False)
        errors = np.linalg.norm(xt[None, :] - np.exp(1j * grid)[:, None] * self.x[None, :], axis=1)
        best = float(errors.min() / np.linalg.norm(self.x))
        self.assertLessEqual(error, best + 1e-12)
        self.assertAlmostEqual(error, best, places=6)

    def test_zero_truth(self):
        with self.assertRaises(ParameterError):
            align_and_error(self.x, np.zeros(5))


class TestProcedureA(unittest.TestCase):

    def test_fixed_frame_on_complete_graph(self):
        g = Graph.from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
        phi = np.array([[1, 0, 1, 1], [0, 1, 1j, -1]], dtype=complex)
        ens = MeasurementEnsemble(dim=2, graph=g, phi_v=phi)
        x = np.array([1.0, 2.0 - 1.0j])
        report = procedure_a(ens, measure(ens, x), truth=x)
        self.assertLess(report.aligned_error, 1e-10)
        self.assertEqual(report.surviving_vertices["component"], [0, 1, 2, 3])
        self.assertEqual(report.deleted_vertex_count, 0)

    def test_succeeds_above_phase_transition(self):
        successes = 0
        for seed in range(30):
            ens, x, data = er_instance(16, 3, 2, seed)
            try:
                report = procedure_a(ens, data, truth=x)
            except UnrecoverableError:
                continue
            successes += int(report.aligned_error < 1e-5)
        self.assertGreaterEqual(successes, 27)

    def test_zero_signal_fails_at_deletion(self):
        ens, _, _ = er_instance(4, 3, 3, seed=1)
        with self.assertRaises(UnrecoverableError) as ctx:
            procedure_a(ens, measure(ens, np.zeros(4)))
        self.assertEqual(ctx.exception.stage, "deletion")

    def test_small_component_fails(self):
        g = Graph.from_edges(6, [(0, 1), (2, 3), (4, 5)])
        ens = build_ensemble(g, 3, seed=2)
        with self.assertRaises(UnrecoverableError) as ctx:
            procedure_a(ens, measure(ens, random_signal(3, seed=3)))
        self.assertEqual(ctx.exception.stage, "component")

    def test_vertex_behind_zero_edges_is_unrecoverable(self):
        g = Graph.from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
        phi = np.array([[1, 0, 1, 1], [0, 1, 1j, -1]], dtype=complex)
        ens = MeasurementEnsemble(dim=2, graph=g, phi_v=phi)
        data = measure(ens, np.array([1.0, 2.0 - 1.0j]))
        edge_z = data.edge_z.copy()
        for other in (0, 2, 3):
            edge_z[g.find_edge(1, other)] = 0.0
        with self.assertRaises(UnrecoverableError) as ctx:
            procedure_a(ens, IntensityData(vertex_z=data.vertex_z, edge_z=edge_z), PruneParams(zero_tol=0.0))
        self.assertEqual(ctx.exception.stage, "propagation")

    def test_negative_intensities_rejected(self):
        ens, x, data = er_instance(4, 3, 3, seed=2)
        bad = IntensityData(vertex_z=data.vertex_z - 1.0, edge_z=data.edge_z)
        with self.assertRaises(ParameterError):
            procedure_a(ens, bad)

    def test_global_phase_does_not_change_the_data(self):
        ens, x, data = er_instance(8, 3, 4, seed=3)
        rotated = measure(ens, np.exp(0.7j) * x)
        np.testing.assert_allclose(rotated.as_vector(), data.as_vector(), rtol=1e-12, atol=1e-14)
        self.assertLess(procedure_a(ens, rotated, truth=np.exp(0.7j) * x).aligned_error, 1e-8)

    def test_scaling_the_signal_scales_the_estimate(self):
        ens, x, data = er_instance(8, 3, 4, seed=4)
        params = PruneParams(zero_tol=0.0)
        base = procedure_a(ens, data, params).estimate
        scaled = procedure_a(ens, measure(ens, 3.0 * x), params).estimate
        np.testing.assert_allclose(scaled, 3.0 * base, rtol=1e-9, atol=1e-12)

    def test_report_records_stage_timings(self):
        ens, x, data = er_instance(8, 3, 4, seed=5)
        report = procedure_a(ens, data, truth=x)
        self.assertEqual(set(report.timings), {"deletion", "component", "propagation", "reconstruction"})
        self.assertEqual(report.diagnostics["nsr"], 0.0)


class TestProcedureB(unittest.TestCase):

    def test_noiseless_recovery(self):
        ens, x, data = er_instance(16, 3, 8, seed=7)
        report = procedure_b(ens, data, truth=x)
        self.assertLess(report.aligned_error, 1e-8)
        self.assertGreaterEqual(report.spectral_gap_final, 0.1 - GAP_TOL)
        self.assertGreater(report.min_edge_magnitude, 0.0)

    def test_surviving_sets_are_nested(self):
        ens, x, data = er_instance(16, 3, 8, seed=8, sigma=0.2, model=NoiseModel.PRE_MODULUS)
        report = procedure_b(ens, data, truth=x)
        sets = report.surviving_vertices
        self.assertTrue(set(sets["kept"]) <= set(sets["connectivity"]))
        self.assertTrue(set(sets["connectivity"]) <= set(sets["reliability"]))
        self.assertTrue(set(sets["reliability"]) <= set(sets["input"]))
        if "kappa_unreachable" not in report.flags:
            self.assertEqual(len(sets["kept"]), math.ceil(0.9 * ens.n_vertices - 1e-9))
        self.assertIn("sync_bound", report.diagnostics)

    def test_edgeless_graph_is_unrecoverable(self):
        ens = build_ensemble(Graph(20), 2, seed=1)
        with self.assertRaises(UnrecoverableError) as ctx:
            procedure_b(ens, measure(ens, random_signal(2, seed=2)))
        self.assertEqual(ctx.exception.stage, "component")

    @unittest.skipUnless(SLOW, "set POLARPHASE_SLOW_TESTS=1")
    def test_noisy_error_is_comparable_to_vertex_oracle(self):
        for M in (32, 64):
            ours, oracle = [], []
            for seed in range(20):
                ens, x, data = er_instance(M, 3, 8, seed, sigma=0.4, model=NoiseModel.PRE_MODULUS)
                start = time.perf_counter()
                report = procedure_b(ens, data, truth=x)
                self.assertLess(time.perf_counter() - start, 1.0)
                ours.append(report.aligned_error)
                oracle.append(align_and_error(oracle_estimates(ens, data, x)["oracle_vertex"], x)[1])
            self.assertLessEqual(np.median(ours), 2.0 * np.median(oracle))

    @unittest.skipUnless(SLOW, "set POLARPHASE_SLOW_TESTS=1")
    def test_error_grows_with_noise(self):
        low, high = [], []
        for seed in range(10):
            ens, x, data = er_instance(32, 3, 8, seed, sigma=0.1, model=NoiseModel.PRE_MODULUS)
            low.append(procedure_b(ens, data, truth=x).aligned_error)
            data = measure(ens, x, NoiseSpec(NoiseModel.PRE_MODULUS, 0.8), seed=seed + 40000)
            high.append(procedure_b(ens, data, truth=x).aligned_error)
        self.assertLess(np.median(low), np.median(high))


class TestProjectiveUniformity(unittest.TestCase):

    def test_orthonormal_basis(self):
        estimate = estimate_projective_uniformity(np.eye(2, dtype=complex), 0.5, 20000, seed=1)
        self.assertGreaterEqual(estimate, 0.5)
        self.assertLess(estimate, 0.501)

    def test_zero_column_gives_zero_at_full_alpha(self):
        phi = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]], dtype=complex)
        self.assertEqual(estimate_projective_uniformity(phi, 1.0, 100, seed=2), 0.0)

    def test_invalid_arguments(self):
        phi = np.eye(2, dtype=complex)
        for alpha in (0.0, 1.5):
            with self.assertRaises(ParameterError):
                estimate_projective_uniformity(phi, alpha, 10)
        with self.assertRaises(ParameterError):
            estimate_projective_uniformity(phi, 0.5, 0)

    def test_agrees_with_grid_search_in_two_dimensions(self):
        phi = build_ensemble(Graph(24), 2, seed=5).phi_v
        estimate = estimate_projective_uniformity(phi, 0.5, 200000, seed=6)
        t = np.linspace(0, np.pi / 2, 801)
        grid = math.inf
        for p in np.linspace(0, 2 * np.pi, 1600, endpoint=False):
            x = np.stack([np.cos(t), np.exp(1j * p) * np.sin(t)])
            values = np.abs(phi.conj().T @ x) ** 2
            grid = min(grid, float(np.sort(values, axis=0)[24 - 12, :].min()))
        self.assertLess(abs(estimate - grid) / grid, 0.1)


class TestReporting(unittest.TestCase):

    def test_error_to_nsr_ratio(self):
        self.assertTrue(math.isnan(error_to_nsr_ratio(0.1, 8, 0.0)))
        expected = 0.04 / (math.sqrt(4 / math.log(4)) * 0.5)
        self.assertAlmostEqual(error_to_nsr_ratio(0.2, 4, 0.5), expected)

    def test_report_serializes_complex_estimate(self):
        report = RecoveryReport(method="a", estimate=np.array([1 + 2j]), surviving_vertices={"input": [1, 0]})
        payload = json.loads(report_to_json(report))
        self.assertEqual(payload["estimate"], {"real": [1.0], "imag": [2.0]})
        self.assertEqual(payload["surviving_vertices"], {"input": [0, 1]})
        self.assertIsNone(payload["aligned_error"])


if __name__ == '__main__':
    unittest.main()
