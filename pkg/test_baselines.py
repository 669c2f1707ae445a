"""
Unit tests for alternating projections and the least-squares phase oracles.
"""

import math
import os
import unittest

import numpy as np

from polarphase.baselines import (
    AltProjParams,
    RangeProjector,
    alternating_projections,
    oracle_estimates,
    oracle_full_lsq,
    oracle_inputs,
    oracle_vertex_lsq,
    run_alternating_projections,
)
from polarphase.ensemble import (
    NoiseModel,
    NoiseSpec,
    build_ensemble,
    full_frame,
    linear_measurements,
    measure,
    random_signal,
)
from polarphase.errors import ParameterError, ReconstructionInfeasibleError, UnrecoverableError
from polarphase.graphs import gen_erdos_renyi
from polarphase.recovery import align_and_error, least_squares_reconstruct, procedure_b

SLOW = os.getenv("POLARPHASE_SLOW_TESTS") == "1"


def instance(M=8, n=24, c=6.0, seed=0, noise=None):
    ens = build_ensemble(gen_erdos_renyi(n, min(c / n, 1.0), seed=seed), M, seed=seed + 1)
    x = random_signal(M, seed=seed + 2)
    return ens, x, measure(ens, x, noise, seed=seed + 3)


class TestAltProjParams(unittest.TestCase):

    def test_validation(self):
        with self.assertRaises(ParameterError):
            AltProjParams(max_iter=0)
        with self.assertRaises(ParameterError):
            AltProjParams(move_tol=0.0)

    def test_from_settings(self):
        params = AltProjParams.from_settings({"alternating_projections": {"max_iter": 5, "move_tol": 0.01}})
        self.assertEqual(params, AltProjParams(max_iter=5, move_tol=0.01))
        self.assertEqual(AltProjParams.from_settings({}), AltProjParams())


class TestRangeProjector(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        self.phi = rng.standard_normal((3, 10)) + 1j * rng.standard_normal((3, 10))
        self.y = rng.standard_normal(10) + 1j * rng.standard_normal(10)

    def test_projection_is_idempotent(self):
        projector = RangeProjector(self.phi)
        once = projector.project(self.y)
        np.testing.assert_allclose(projector.project(once), once, atol=1e-12)

    def test_solve_inverts_the_frame_on_its_range(self):
        projector = RangeProjector(self.phi)
        x = np.array([1.0, -2.0j, 0.5 + 0.5j])
        np.testing.assert_allclose(projector.solve(self.phi.conj().T @ x), x, atol=1e-12)

    def test_rank_deficient_frame(self):
        phi = np.vstack([self.phi[0], self.phi[0], self.phi[1]])
        with self.assertRaises(ReconstructionInfeasibleError):
            RangeProjector(phi)
        with self.assertRaises(ReconstructionInfeasibleError):
            RangeProjector(self.phi[:, :2])


class TestAlternatingProjections(unittest.TestCase):

    def test_true_phases_are_a_fixed_point(self):
        ens, x, data = instance()
        phi = full_frame(ens)
        a, b = linear_measurements(ens, x)
        y0 = np.concatenate([a, b.reshape(-1)])
        result = run_alternating_projections(phi, data.as_vector(), y0=y0)
        self.assertTrue(result.converged)
        self.assertLessEqual(result.iterations, 2)
        self.assertLess(align_and_error(result.estimate, x)[1], 1e-10)

    def test_iteration_cap_is_respected(self):
        ens, _, data = instance(seed=4)
        params = AltProjParams(max_iter=3, move_tol=1e-300)
        result = run_alternating_projections(full_frame(ens), data.as_vector(), params)
        self.assertEqual(result.iterations, 3)
        self.assertFalse(result.converged)

    def test_zero_intensities_give_zero_estimate(self):
        ens, _, _ = instance(seed=5)
        estimate = alternating_projections(ens.phi_v, np.zeros(ens.n_vertices))
        np.testing.assert_array_equal(estimate, np.zeros(ens.dim))

    def test_wrong_intensity_shape(self):
        ens, _, data = instance(seed=6)
        with self.assertRaises(ParameterError):
            alternating_projections(ens.phi_v, data.as_vector())

    @unittest.skipUnless(SLOW, "set POLARPHASE_SLOW_TESTS=1")
    def test_polarized_frame_rescues_alternating_projections(self):
        for M in (32, 64):
            vertex, full, polarized = [], [], []
            for seed in range(20):
                ens, x, data = instance(M=M, n=3 * M, c=8.0, seed=seed,
                                        noise=NoiseSpec(NoiseModel.POST_INTENSITY, 0.4))
                vertex.append(align_and_error(alternating_projections(ens.phi_v, data.vertex_z), x)[1])
                full.append(align_and_error(alternating_projections(full_frame(ens), data.as_vector()), x)[1])
                try:
                    polarized.append(procedure_b(ens, data, truth=x).aligned_error)
                except UnrecoverableError:
                    polarized.append(math.inf)
            self.assertGreater(np.median(vertex), 0.5)
            self.assertLess(np.median(full), np.median(vertex) / 2)
            self.assertLess(np.median(full), np.median(polarized))


class TestOracles(unittest.TestCase):

    def test_noiseless_oracles_are_exact(self):
        ens, x, data = instance()
        for name, estimate in oracle_estimates(ens, data, x).items():
            np.testing.assert_allclose(estimate, x, atol=1e-10, err_msg=name)

    def test_inputs_carry_the_injected_noise(self):
        ens, x, data = instance(noise=NoiseSpec(NoiseModel.PRE_MODULUS, 0.3))
        y_v, y_full = oracle_inputs(ens, data, x)
        a, b = linear_measurements(ens, x)
        np.testing.assert_allclose(y_v, a + data.vertex_noise)
        np.testing.assert_allclose(y_full[ens.n_vertices:], (b + data.edge_noise).reshape(-1))

    def test_oracle_is_linear_in_the_noise(self):
        ens, x, _ = instance(seed=7)
        rng = np.random.default_rng(8)
        nu = rng.standard_normal(ens.n_vertices) + 1j * rng.standard_normal(ens.n_vertices)
        a, _ = linear_measurements(ens, x)
        np.testing.assert_allclose(
            oracle_vertex_lsq(ens.phi_v, a + nu) - x,
            oracle_vertex_lsq(ens.phi_v, nu),
            atol=1e-10,
        )

    def test_oracles_match_least_squares(self):
        ens, x, data = instance(seed=9, noise=NoiseSpec(NoiseModel.PRE_MODULUS, 0.5))
        y_v, y_full = oracle_inputs(ens, data, x)
        np.testing.assert_array_equal(oracle_vertex_lsq(ens.phi_v, y_v), least_squares_reconstruct(ens.phi_v, y_v))
        phi = full_frame(ens)
        np.testing.assert_array_equal(oracle_full_lsq(phi, y_full), least_squares_reconstruct(phi, y_full))

    def test_dimension_mismatch(self):
        ens, _, _ = instance(seed=10)
        with self.assertRaises(ParameterError):
            oracle_vertex_lsq(ens.phi_v, np.ones(ens.n_vertices + 1))


if __name__ == '__main__':
    unittest.main()
