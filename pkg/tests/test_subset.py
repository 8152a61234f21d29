import math

import numpy as np
import pytest
from scipy import stats

from teleport_ensemble.analysis import (
    exact_interacting_stage_matrix,
    exact_sweep_stage_matrix,
    product_distribution,
    random_instance,
)
from teleport_ensemble.core import (
    WalkerEnsemble,
    acceptance_probability,
    ensemble_step,
    importance_weights,
)
from teleport_ensemble.kernels import GaussianKernel, TabulatedKernel
from teleport_ensemble.subset import (
    SplitEnsemble,
    alternating_step,
    independent_sweep,
    interacting_step,
    subset_acceptance_probability,
    subset_weights,
    walker_streams,
)
from teleport_ensemble.targets import DoubleWellTarget, TabulatedTarget

PI_2X2 = np.array([[0.1, 0.3],
                   [0.4, 0.2]])
Q_2 = np.array([[0.7, 0.4],
                [0.3, 0.6]])


def split_finite(table, kernel_matrix, pairs):
    target = TabulatedTarget(np.log(table))
    kernel = TabulatedKernel(kernel_matrix)
    ens = SplitEnsemble([[u] for u, _ in pairs], [[v] for _, v in pairs], target, kernel,
                        rebuild_every=0)
    return ens, target, kernel


class GaussianInV:
    """pi(u, v) = N(v; 0, 1), independent of u."""

    def log_unnorm(self, x):
        return -0.5 * float(x[1]) ** 2


class TestSubsetWeights:
    def test_reduces_to_core_weights_without_v_dependence(self):
        inst = random_instance(np.random.default_rng(1), 3)
        table = np.repeat(inst.pi[:, None], 2, axis=1) / 2
        pairs = [(0, 1), (2, 0), (1, 1)]
        ens, target, kernel = split_finite(table, inst.q, pairs)
        core = WalkerEnsemble([[u] for u, _ in pairs], inst.target(), inst.kernel())
        for z in range(3):
            zvec = np.array([float(z)])
            np.testing.assert_allclose(subset_weights(ens, zvec, target, kernel).weights,
                                       importance_weights(core, zvec, inst.target(),
                                                          inst.kernel()).weights, rtol=1e-13)

    def test_single_walker(self):
        ens, target, kernel = split_finite(PI_2X2, Q_2, [(1, 0)])
        for z in (0.0, 1.0):
            np.testing.assert_array_equal(
                subset_weights(ens, np.array([z]), target, kernel).weights, [1.0])

    def test_two_by_two_hand_evaluation(self):
        # walkers (u, v) = (0, 0) and (1, 1); proposal z = 1
        ens, target, kernel = split_finite(PI_2X2, Q_2, [(0, 0), (1, 1)])
        num0 = PI_2X2[1, 0] * (Q_2[0, 1] + Q_2[0, 1]) / PI_2X2[0, 0]
        num1 = PI_2X2[1, 1] * (Q_2[1, 1] + Q_2[1, 0]) / PI_2X2[1, 1]
        wc = subset_weights(ens, np.array([1.0]), target, kernel)
        np.testing.assert_allclose(wc.per_walker_numerators, [num0, num1], rtol=1e-14)
        np.testing.assert_allclose(wc.weights, np.array([num0, num1]) / (num0 + num1), rtol=1e-14)


class TestSubsetAcceptance:
    def test_identity_move(self):
        ens, target, kernel = split_finite(PI_2X2, Q_2, [(0, 0), (1, 1), (0, 1)])
        for i in range(3):
            a = subset_acceptance_probability(ens, i, ens.u_walkers[i].copy(), target, kernel)
            assert a == pytest.approx(1.0, abs=1e-15)

    def test_reduces_to_core_acceptance_without_v_dependence(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            inst = random_instance(rng, 3)
            table = np.repeat(inst.pi[:, None], 3, axis=1) / 3
            pairs = [(int(rng.integers(3)), int(rng.integers(3))) for _ in range(3)]
            ens, target, kernel = split_finite(table, inst.q, pairs)
            core = WalkerEnsemble([[u] for u, _ in pairs], inst.target(), inst.kernel())
            z = np.array([float(rng.integers(3))])
            for i in range(3):
                assert subset_acceptance_probability(ens, i, z, target, kernel) == pytest.approx(
                    acceptance_probability(core, i, z, inst.target(), inst.kernel()), rel=1e-12)

    def test_relative_normalization_independence(self):
        rng = np.random.default_rng(3)
        base = rng.uniform(0.1, 1.0, size=(3, 4))
        c = rng.uniform(0.01, 50.0, size=4)
        q = random_instance(rng, 3).q
        pairs = [(0, 1), (2, 3), (1, 0)]
        e1, t1, k1 = split_finite(base, q, pairs)
        e2, t2, k2 = split_finite(base * c[None, :], q, pairs)
        for z in range(3):
            zv = np.array([float(z)])
            np.testing.assert_allclose(subset_weights(e1, zv, t1, k1).weights,
                                       subset_weights(e2, zv, t2, k2).weights, rtol=1e-12)
            for i in range(3):
                assert subset_acceptance_probability(e1, i, zv, t1, k1) == pytest.approx(
                    subset_acceptance_probability(e2, i, zv, t2, k2), rel=1e-12)

    def test_relative_normalization_leaves_trajectory_unchanged(self):
        rng = np.random.default_rng(4)
        base = rng.uniform(0.1, 1.0, size=(4, 3))
        c = rng.uniform(0.01, 50.0, size=3)
        q = random_instance(rng, 4).q
        pairs = [(0, 1), (2, 2), (1, 0), (3, 1)]
        e1, t1, k1 = split_finite(base, q, pairs)
        e2, t2, k2 = split_finite(base * c[None, :], q, pairs)
        r1, r2 = np.random.default_rng(99), np.random.default_rng(99)
        for _ in range(2000):
            o1 = interacting_step(e1, t1, k1, r1)
            o2 = interacting_step(e2, t2, k2, r2)
            assert (o1.deletion_index, o1.accepted) == (o2.deletion_index, o2.accepted)
            assert o1.acceptance_probability == pytest.approx(o2.acceptance_probability,
                                                              rel=1e-12)
        np.testing.assert_array_equal(e1.u_walkers, e2.u_walkers)


class TestStageStationarity:
    @staticmethod
    def big_pi(table, n):
        return product_distribution((table / table.sum()).reshape(-1), n)

    def test_interacting_stage(self):
        p = exact_interacting_stage_matrix(np.log(PI_2X2), Q_2, 2)
        big = self.big_pi(PI_2X2, 2)
        np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-14)
        assert np.max(np.abs(p @ big - big)) < 1e-12

    def test_sweep_stage(self):
        r = np.array([[0.2, 0.5], [0.8, 0.5]])
        p = exact_sweep_stage_matrix(np.log(PI_2X2), r, 2, 3)
        big = self.big_pi(PI_2X2, 2)
        np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-14)
        assert np.max(np.abs(p @ big - big)) < 1e-12

    def test_composition(self):
        r = np.array([[0.2, 0.5], [0.8, 0.5]])
        p = (exact_sweep_stage_matrix(np.log(PI_2X2), r, 2, 30)
             @ exact_interacting_stage_matrix(np.log(PI_2X2), Q_2, 2))
        big = self.big_pi(PI_2X2, 2)
        assert np.max(np.abs(p @ big - big)) < 1e-12

    def test_random_product_spaces(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            table = rng.uniform(0.05, 1.0, size=(2, 3))
            q = random_instance(rng, 2).q
            p = exact_interacting_stage_matrix(np.log(table), q, 2)
            big = self.big_pi(table, 2)
            assert np.max(np.abs(p @ big - big)) < 1e-12


class TestIndependentSweep:
    def test_requires_positive_inner_count(self):
        ens, target, kernel = split_finite(PI_2X2, Q_2, [(0, 0)])
        with pytest.raises(ValueError):
            independent_sweep(ens, target, TabulatedKernel(Q_2), 0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            alternating_step(ens, target, kernel, TabulatedKernel(Q_2), 0,
                             np.random.default_rng(0))

    def test_flat_conditional_accepts_everything(self):
        class FlatInV:
            def log_unnorm(self, x):
                return -float(x[0]) ** 2

        target = FlatInV()
        ens = SplitEnsemble(np.zeros((4, 1)), np.zeros((4, 2)), target, GaussianKernel(1.0))
        counts = independent_sweep(ens, target, GaussianKernel(0.3, dim=2), 1,
                                   np.random.default_rng(1))
        np.testing.assert_array_equal(counts, 1)

    def test_gaussian_conditional_marginal(self):
        target = GaussianInV()
        ens = SplitEnsemble([[0.0]], [[0.0]], target, GaussianKernel(1.0))
        rng = np.random.default_rng(6)
        v_kernel = GaussianKernel(0.25)
        n = 100_000
        draws = np.empty(n)
        accepted = 0
        for k in range(n):
            accepted += int(independent_sweep(ens, target, v_kernel, 1, rng)[0])
            draws[k] = ens.v_walkers[0, 0]
        assert stats.kstest(draws, "norm").statistic < 0.02
        assert 0.6 <= accepted / n <= 0.95

    def test_cached_density_follows_sweep(self, rng):
        target = GaussianInV()
        ens = SplitEnsemble(rng.normal(size=(3, 1)), rng.normal(size=(3, 1)), target,
                            GaussianKernel(1.0))
        independent_sweep(ens, target, GaussianKernel(0.5), 5, rng)
        direct = [target.log_unnorm(ens.joint(ens.u_walkers[i], ens.v_walkers[i]))
                  for i in range(3)]
        np.testing.assert_allclose(ens.cached_log_pi, direct, rtol=1e-12)

    def test_walker_streams_depend_only_on_key_and_index(self):
        a = walker_streams(np.random.default_rng(10), 4)
        b = walker_streams(np.random.default_rng(10), 6)
        for ga, gb in zip(a, b):
            assert ga.random() == gb.random()
        assert a[0].random() != a[1].random()


class TestAlternatingStep:
    def test_empty_v_block_matches_core_sampler(self):
        target = DoubleWellTarget(5.0)
        kernel = GaussianKernel(0.25 ** 2)
        start = np.linspace(-1.0, 1.0, 5)[:, None]
        core = WalkerEnsemble(start, target, kernel)
        split = SplitEnsemble(start, np.zeros((5, 0)), target, kernel)
        r1, r2 = np.random.default_rng(21), np.random.default_rng(21)
        for _ in range(3000):
            o1 = ensemble_step(core, target, kernel, r1)
            o2 = alternating_step(split, target, kernel, GaussianKernel(1.0), 1, r2)
            assert (o1.clone_index, o1.deletion_index, o1.accepted) == (
                o2.clone_index, o2.deletion_index, o2.accepted)
        np.testing.assert_array_equal(core.walkers, split.u_walkers)

    def test_cache_coherence(self):
        rng = np.random.default_rng(22)

        class Joint:
            def log_unnorm(self, x):
                return float(-(x[0] ** 4 - x[0] ** 2) * 3 - 0.5 * (x[1] - x[0]) ** 2)

        target = Joint()
        kernel = GaussianKernel(0.1)
        ens = SplitEnsemble(rng.normal(size=(10, 1)) * 0.5, rng.normal(size=(10, 1)), target,
                            kernel, rebuild_every=0)
        for _ in range(3000):
            alternating_step(ens, target, kernel, GaussianKernel(0.2), 2, rng)
        np.testing.assert_allclose(ens.cached_u_kernel_sums, ens.direct_kernel_sums(),
                                   rtol=1e-8)
        direct = [target.log_unnorm(ens.joint(ens.u_walkers[i], ens.v_walkers[i]))
                  for i in range(10)]
        np.testing.assert_allclose(ens.cached_log_pi, direct, rtol=1e-12)
        assert ens.sweeps == 3000 and ens.generation == 3000

    def test_seeded_determinism(self):
        def run():
            rng = np.random.default_rng(23)
            target = GaussianInV()
            ens = SplitEnsemble(np.zeros((4, 1)), np.zeros((4, 1)), target, GaussianKernel(0.5))
            for _ in range(200):
                alternating_step(ens, target, GaussianKernel(0.5), GaussianKernel(0.3), 3, rng)
            return ens.u_walkers.copy(), ens.v_walkers.copy()

        a, b = run(), run()
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_partial_support_proposal(self):
        # z outside the support for one walker's v but not another's
        table = np.array([[0.5, 0.5], [0.0, 1.0]])
        with np.errstate(divide="ignore"):
            target = TabulatedTarget(np.log(table))
        kernel = TabulatedKernel(np.full((2, 2), 0.5))
        ens = SplitEnsemble([[0.0], [0.0]], [[0.0], [1.0]], target, kernel, rebuild_every=0)
        wc = subset_weights(ens, np.array([1.0]), target, kernel)
        assert wc.weights[0] == 0.0 and wc.weights[1] == pytest.approx(1.0)
        assert subset_acceptance_probability(ens, 0, np.array([1.0]), target, kernel) == 0.0
        assert math.isfinite(subset_acceptance_probability(ens, 1, np.array([1.0]), target,
                                                           kernel))
