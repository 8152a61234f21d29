"""Sampler drivers and walker initializations for the numerical experiments.

Each driver advances an ensemble for a fixed number of steps and fills a
:class:`~teleport_ensemble.diagnostics.RunRecord` with the ensemble mean
and cloned-walker value of one designated coordinate.
"""
from __future__ import annotations

import math

import numpy as np

from .core import DEFAULT_REBUILD_EVERY, WalkerEnsemble, ensemble_step
from .diagnostics import RunRecord
from .gp import (
    GaussianGPTarget,
    MultivariateGPTarget,
    NonGaussianGPTarget,
    generate_synthetic_data,
)
from .kernels import GaussianKernel
from .subset import SplitEnsemble, alternating_step
from .targets import DoubleWellTarget

# coordinate whose ensemble average is tracked
RHO_INDEX = 1  # (alpha, rho, sigma)
C1_INDEX = 1  # (alpha, c1, z21, c2, ..., sigma)


def run_ensemble_chain(target, kernel, walkers, steps, rng, summary_index=0,
                       rebuild_every=DEFAULT_REBUILD_EVERY, seed=None, config=None):
    """Run ``steps`` teleporting-ensemble steps.

    ``cloned_value`` is recorded for walker j before the step: walker j
    is a uniform pick from the ensemble, so at stationarity it is a draw
    from the target marginal.

    Returns
    -------
    record : RunRecord
    ensemble : WalkerEnsemble
        The final state.
    """
    ens = WalkerEnsemble(walkers, target, kernel, rebuild_every=rebuild_every)
    if not np.all(np.isfinite(ens.cached_log_pi)):
        raise ValueError("initial walkers must lie in the support of the target")
    record = RunRecord(ens.n_walkers, seed, dict(config or {}))
    col = ens.walkers[:, summary_index]  # view, follows in-place updates
    for _ in range(int(steps)):
        before = col.copy()
        out = ensemble_step(ens, target, kernel, rng)
        record.append(col.mean(), before[out.clone_index], out.accepted, out.teleported)
    return record, ens


def run_subset_chain(target, u_kernel, v_kernel, u_walkers, v_walkers, n_inner, steps, rng,
                     summary_index=0, rebuild_every=DEFAULT_REBUILD_EVERY, seed=None,
                     config=None):
    """Alternate interacting u-steps and independent v-sweeps.

    Only the u-steps count as steps; the number of inner Metropolis
    moves is stored in ``record.config["inner_moves"]``.
    """
    ens = SplitEnsemble(u_walkers, v_walkers, target, u_kernel, rebuild_every=rebuild_every)
    if not np.all(np.isfinite(ens.cached_log_pi)):
        raise ValueError("initial walkers must lie in the support of the target")
    record = RunRecord(ens.n_walkers, seed, dict(config or {}))
    col = ens.u_walkers[:, summary_index]
    inner_accepts = 0
    for _ in range(int(steps)):
        before = col.copy()
        out = alternating_step(ens, target, u_kernel, v_kernel, n_inner, rng)
        inner_accepts += int(out.sweep_accepts.sum())
        record.append(col.mean(), before[out.clone_index], out.accepted, out.teleported)
    record.config["inner_moves"] = int(steps) * ens.n_walkers * int(n_inner)
    record.config["inner_accepts"] = inner_accepts
    return record, ens


# --- initial ensembles ------------------------------------------------------

def double_well_walkers(rng, n_walkers, beta):
    """Draws from the 90/10 Gaussian mixture at the two modes."""
    c = math.sqrt(0.5)
    centre = np.where(rng.random(n_walkers) < 0.9, -c, c)
    return (centre + rng.standard_normal(n_walkers) / math.sqrt(20.0 * beta))[:, None]


def box_walkers(rng, n_walkers, dim, low, high):
    return rng.uniform(low, high, size=(n_walkers, dim))


def multivariate_walkers(rng, n_walkers, n, low, high):
    """alpha, sigma and the diagonal c_i uniform on [low, high]; z_ij = 0."""
    n_tri = n * (n + 1) // 2
    out = np.zeros((n_walkers, n_tri + 2))
    out[:, 0] = rng.uniform(low, high, n_walkers)
    out[:, -1] = rng.uniform(low, high, n_walkers)
    for i in range(n):
        out[:, 1 + i * (i + 3) // 2] = rng.uniform(low, high, n_walkers)
    return out


def multivariate_proposal(n, d_alpha, d_matrix, d_sigma):
    """Diagonal proposal over (alpha, packed L, sigma)."""
    n_tri = n * (n + 1) // 2
    return GaussianKernel(np.concatenate([[d_alpha], np.full(n_tri, d_matrix), [d_sigma]]))


# --- complete experiments ----------------------------------------------------

def sample_double_well(beta, sigma, n_walkers, steps, rng, seed=None, config=None):
    target = DoubleWellTarget(beta)
    kernel = GaussianKernel(sigma * sigma)
    walkers = double_well_walkers(rng, n_walkers, beta)
    return run_ensemble_chain(target, kernel, walkers, steps, rng, 0, seed=seed, config=config)


def sample_gp_univariate(dataset, n_walkers, steps, proposal_variance, rng, init=(0.5, 1.5),
                         seed=None, config=None):
    target = GaussianGPTarget(dataset)
    kernel = GaussianKernel(proposal_variance, dim=3)
    walkers = box_walkers(rng, n_walkers, 3, *init)
    return run_ensemble_chain(target, kernel, walkers, steps, rng, RHO_INDEX, seed=seed,
                              config=config)


def sample_gp_multivariate(dataset, n_walkers, steps, proposal_diag, rng, init=(0.5, 1.5),
                           seed=None, config=None):
    target = MultivariateGPTarget(dataset)
    kernel = multivariate_proposal(dataset.n, *proposal_diag)
    walkers = multivariate_walkers(rng, n_walkers, dataset.n, *init)
    return run_ensemble_chain(target, kernel, walkers, steps, rng, C1_INDEX, seed=seed,
                              config=config)


def sample_gp_nongaussian(dataset, n_walkers, steps, u_proposal_diag, v_proposal_variance,
                          n_inner, rng, init=(0.5, 1.5), seed=None, config=None):
    """Subset scheme: theta interacts, the whitened w are swept independently.

    The w start at zero.
    """
    target = NonGaussianGPTarget(dataset)
    u_kernel = GaussianKernel(np.asarray(u_proposal_diag, dtype=float))
    v_kernel = GaussianKernel(v_proposal_variance, dim=dataset.m)
    u0 = box_walkers(rng, n_walkers, 3, *init)
    v0 = np.zeros((n_walkers, dataset.m))
    return run_subset_chain(target, u_kernel, v_kernel, u0, v0, n_inner, steps, rng,
                            RHO_INDEX, seed=seed, config=config)


def make_dataset(n, m, seed):
    """Synthetic regression data from its own seed, shared across ensemble sizes."""
    return generate_synthetic_data(n, m, np.random.default_rng(seed))
