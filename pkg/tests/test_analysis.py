import numpy as np
import pytest

from teleport_ensemble.analysis import (
    FiniteInstance,
    exact_ensemble_transition_matrix,
    finite_chi2_decay,
    hyperplane_basis,
    jacobian,
    jacobian_spectrum_check,
    metropolize,
    product_distribution,
    random_instance,
    variance_ratio_bound_check,
    verification_suite,
)
from teleport_ensemble.errors import TooLarge


class TestFiniteInstance:
    def test_validation(self):
        with pytest.raises(ValueError):
            FiniteInstance([0.5, 0.6], np.eye(2))
        with pytest.raises(ValueError):
            FiniteInstance([0.5, 0.5], [[0.5, 0.5], [0.6, 0.5]])
        with pytest.raises(ValueError):
            FiniteInstance([0.5, 0.5], np.eye(3))

    def test_random_instances_have_full_support(self):
        rng = np.random.default_rng(0)
        for s in range(2, 7):
            inst = random_instance(rng, s)
            assert inst.full_support and inst.n_states == s

    def test_metropolize_detailed_balance(self):
        inst = random_instance(np.random.default_rng(1), 4)
        m = metropolize(inst.q, inst.pi)
        flux = m * inst.pi[None, :]
        np.testing.assert_allclose(flux, flux.T, atol=1e-15)
        np.testing.assert_allclose(m.sum(axis=0), 1.0, atol=1e-14)


class TestEnsembleTransitionMatrix:
    def test_single_walker_is_metropolized_kernel(self):
        inst = random_instance(np.random.default_rng(2), 2)
        p = exact_ensemble_transition_matrix(inst, 1)
        np.testing.assert_allclose(p, metropolize(inst.q, inst.pi), atol=1e-14)

    def test_columns_sum_to_one(self):
        inst = random_instance(np.random.default_rng(3), 3)
        p = exact_ensemble_transition_matrix(inst, 3)
        np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-14)

    def test_stationarity(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            inst = random_instance(rng, 3)
            p = exact_ensemble_transition_matrix(inst, 2)
            big = product_distribution(inst.pi, 2)
            assert np.max(np.abs(p @ big - big)) < 1e-12

    def test_perfect_proposal_equilibrates_in_one_step(self):
        pi = np.array([0.2, 0.5, 0.3])
        inst = FiniteInstance(pi, np.repeat(pi[:, None], 3, axis=1))
        p = exact_ensemble_transition_matrix(inst, 1)
        np.testing.assert_allclose(p, np.repeat(pi[:, None], 3, axis=1), atol=1e-12)

    def test_perfect_proposal_with_two_walkers_preserves_product(self):
        pi = np.array([0.2, 0.5, 0.3])
        inst = FiniteInstance(pi, np.repeat(pi[:, None], 3, axis=1))
        p = exact_ensemble_transition_matrix(inst, 2)
        big = product_distribution(pi, 2)
        assert np.max(np.abs(p @ big - big)) < 1e-12

    def test_enumeration_guard(self):
        pi = np.full(22, 1 / 22)
        inst = FiniteInstance(pi, np.full((22, 22), 1 / 22))
        with pytest.raises(TooLarge):
            exact_ensemble_transition_matrix(inst, 3)


class TestProductDistribution:
    def test_order_matches_itertools_product(self):
        pi = np.array([0.1, 0.9])
        np.testing.assert_allclose(product_distribution(pi, 2), [0.01, 0.09, 0.09, 0.81])


class TestJacobian:
    def test_hyperplane_basis(self):
        rng = np.random.default_rng(5)
        for s in (2, 3, 6):
            a = rng.uniform(0.1, 1, size=s)
            b = hyperplane_basis(a)
            assert b.shape == (s, s - 1)
            np.testing.assert_allclose(b.T @ b, np.eye(s - 1), atol=1e-14)
            np.testing.assert_allclose(a @ b, 0.0, atol=1e-14)

    def test_metropolized_acts_as_minus_identity(self):
        rng = np.random.default_rng(6)
        inst = random_instance(rng, 5, metropolized=True)
        jm = jacobian(inst)
        for _ in range(20):
            eta = rng.normal(size=5)
            eta -= eta.mean()
            np.testing.assert_allclose(jm.matrix @ eta, -eta, atol=1e-12)

    def test_zero_mass_subspace_invariant(self):
        rng = np.random.default_rng(7)
        inst = random_instance(rng, 5)
        jm = jacobian(inst)
        for _ in range(100):
            eta = rng.normal(size=5)
            eta -= eta.mean()
            assert abs(np.sum(jm.matrix @ eta)) < 1e-12

    def test_two_state_eigenvalue_by_hand(self):
        inst = random_instance(np.random.default_rng(8), 2)
        q_pi = inst.q @ inst.pi
        r = q_pi / inst.pi
        expected = q_pi[0] * (r[0] - r[1]) - r[0]
        report = jacobian_spectrum_check(inst)
        assert report["eigenvalues"][0] == pytest.approx(expected, rel=1e-12)
        jm = jacobian(inst)
        np.testing.assert_allclose(jm.matrix @ np.array([1.0, -1.0]),
                                   expected * np.array([1.0, -1.0]), atol=1e-12)


class TestSpectrumCheck:
    def test_metropolized_eigenvalues_minus_one(self):
        rng = np.random.default_rng(9)
        for s in (2, 4, 6):
            report = jacobian_spectrum_check(random_instance(rng, s, metropolized=True))
            np.testing.assert_allclose(report["eigenvalues"], -1.0, atol=1e-10)
            assert report["pass"]

    def test_random_instances_pass(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            s = int(rng.integers(2, 7))
            report = jacobian_spectrum_check(random_instance(rng, s))
            assert report["pass"], report
            assert report["max_imag"] < 1e-10
            assert report["alpha"] <= report["bound"] + 1e-10

    def test_symmetrized_and_general_spectra_agree(self):
        report = jacobian_spectrum_check(random_instance(np.random.default_rng(11), 5))
        np.testing.assert_allclose(sorted(report["eigenvalues"]), report["general_eigenvalues"],
                                   atol=1e-10)

    def test_rejects_identity_kernel(self):
        inst = FiniteInstance([0.3, 0.7], np.eye(2))
        with pytest.raises(ValueError):
            jacobian_spectrum_check(inst)


class TestVarianceRatioBound:
    def test_fixed_point_is_degenerate(self):
        inst = random_instance(np.random.default_rng(12), 4)
        report = variance_ratio_bound_check(inst, inst.pi)
        assert report["degenerate"] and report["pass"]

    def test_perfect_kernel(self):
        rng = np.random.default_rng(13)
        pi = rng.dirichlet(np.ones(4))
        inst = FiniteInstance(pi, np.repeat(pi[:, None], 4, axis=1))
        rho = rng.dirichlet(np.ones(4))
        report = variance_ratio_bound_check(inst, rho)
        f = pi / rho
        var_pi = np.sum(pi * (f - np.sum(pi * f)) ** 2)
        assert report["var_q_rho"] == pytest.approx(var_pi, rel=1e-12)
        assert report["pass"]

    def test_random_pairs(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            s = int(rng.integers(2, 7))
            inst = random_instance(rng, s)
            rho = np.maximum(rng.dirichlet(np.ones(s)), 1e-3)
            report = variance_ratio_bound_check(inst, rho)
            assert report["pass"], report
            assert report["var_q_rho"] >= 0

    def test_rejects_nonpositive_rho(self):
        inst = random_instance(np.random.default_rng(15), 3)
        with pytest.raises(ValueError):
            variance_ratio_bound_check(inst, [0.5, 0.5, 0.0])


class TestFiniteChi2Decay:
    def test_metropolized_rate_is_two(self):
        rng = np.random.default_rng(16)
        for s in (3, 5):
            out = finite_chi2_decay(random_instance(rng, s, metropolized=True))
            assert out["rate"] == pytest.approx(2.0, rel=0.05)

    def test_general_rate_above_bound(self):
        rng = np.random.default_rng(17)
        for s in (2, 4):
            out = finite_chi2_decay(random_instance(rng, s))
            assert out["rate"] >= 0.95 * out["bound_rate"]


class TestVerificationSuite:
    def test_small_sweep_passes(self):
        out = verification_suite(np.random.default_rng(1), n_instances=10)
        assert out["pass"]
        assert len(out["spectral_reports"]) == 10
        assert set(out["spectral_reports"][0]) == {"instance_index", "n_states", "eigenvalues",
                                                   "alpha", "bound", "pass"}
