"""Interaction restricted to a block of coordinates.

The state of walker i is split as x_i = (u_i, v_i).  An alternation is
one teleport attempt on the u-block (with weights carrying the extra
factor pi(z, v_i)) followed by ``n_inner`` independent Metropolis steps
on each v_i.  The target is evaluated on the joint vector
``concatenate([u, v])``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    _CANCEL_GUARD,
    DEFAULT_REBUILD_EVERY,
    StepOutcome,
    _draw_index,
    _weights_from_logs,
    logsumexp,
    propose_clone,
)
from .errors import NonFiniteRatio, NonFiniteWeight
from .kernels import pairwise_density

DEFAULT_INNER_STEPS = 30


class SplitEnsemble:
    """Walkers split into an interacting u-block and a nuisance v-block."""

    def __init__(self, u_walkers, v_walkers, target, kernel,
                 rebuild_every=DEFAULT_REBUILD_EVERY):
        u = np.array(u_walkers, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        v = np.array(v_walkers, dtype=float)
        if v.ndim == 1:
            v = v.reshape(u.shape[0], -1)
        if v.shape[0] != u.shape[0]:
            raise ValueError("u and v blocks need the same number of walkers")
        self.u_walkers = u
        self.v_walkers = v
        self.target = target
        self.kernel = kernel
        self.rebuild_every = int(rebuild_every)
        self.generation = 0
        self.sweeps = 0
        self.rebuild()

    @property
    def n_walkers(self):
        return self.u_walkers.shape[0]

    @property
    def walkers(self):
        # u-block view, so propose_clone works unchanged
        return self.u_walkers

    def joint(self, u, v):
        return np.concatenate([np.asarray(u, dtype=float), np.asarray(v, dtype=float)])

    def log_pi(self, u, i):
        """log pi(u, v_i)."""
        return self.target.log_unnorm(self.joint(u, self.v_walkers[i]))

    def rebuild(self):
        self.cached_log_pi = np.array(
            [self.log_pi(self.u_walkers[i], i) for i in range(self.n_walkers)])
        self._pair = pairwise_density(self.kernel, self.u_walkers)
        self.cached_u_kernel_sums = self._pair.sum(axis=1)

    def direct_kernel_sums(self):
        n = self.n_walkers
        return np.array([sum(float(self.kernel.pdf(self.u_walkers[i], self.u_walkers[k]))
                             for k in range(n) if k != i) for i in range(n)])


@dataclass
class SubsetWeightComputation:
    weights: np.ndarray
    z_value: float
    per_walker_numerators: np.ndarray
    log_numerators: np.ndarray
    log_z: float


def _log_pi_z_all(ensemble, z):
    return np.array([ensemble.log_pi(z, i) for i in range(ensemble.n_walkers)])


def _log_kernel_terms(ensemble, q_wz):
    """log[q(u_l | z) + sum_{k != l} q(u_l | u_k)] for every l."""
    with np.errstate(divide="ignore"):
        return np.log(ensemble.cached_u_kernel_sums + q_wz)


def _subset_log_numerators(ensemble, log_pi_z, log_kern):
    return log_pi_z + log_kern - ensemble.cached_log_pi


def subset_weights(ensemble, z, target, kernel):
    """Deletion weights w_{v,i}(u, z) and normalizer Z_v(u, z)."""
    if not np.all(np.isfinite(ensemble.cached_log_pi)):
        raise NonFiniteWeight("ensemble contains walkers outside the support")
    log_kern = _log_kernel_terms(ensemble, kernel.pdf(ensemble.u_walkers, z))
    log_num = _subset_log_numerators(ensemble, _log_pi_z_all(ensemble, z), log_kern)
    wc = _weights_from_logs(log_num)
    return SubsetWeightComputation(wc.weights, wc.z_value, wc.per_walker_numerators,
                                   wc.log_numerators, wc.log_z)


def _subset_log_ratio(ensemble, i, log_num, log_pi_z, log_kern, q_zw):
    """log of [pi_{v_i}(u_i) / pi_{v_i}(z)] * Z_v(u, z) / Z_v(u', u_i)."""
    n = ensemble.n_walkers
    u_i = ensemble.u_walkers[i]
    log_pi_ui = np.array([ensemble.log_pi(u_i, l) if l != i else ensemble.cached_log_pi[i]
                          for l in range(n)])
    # for l != i the kernel part of the Z_v(u', u_i) summand equals that of Z_v(u, z)
    swapped = log_pi_ui + log_kern - ensemble.cached_log_pi
    s = float(np.sum(q_zw))
    log_b = math.log(s) if s > 0 else -math.inf
    swapped[i] = ensemble.cached_log_pi[i] + log_b - log_pi_z[i]
    log_z = logsumexp(log_num)
    log_zp = logsumexp(swapped)
    if not (np.isfinite(log_z) and np.isfinite(log_zp)):
        raise NonFiniteRatio("Z_v(u, z) or Z_v(u', u_i) is zero or not finite")
    return ensemble.cached_log_pi[i] - log_pi_z[i] + log_z - log_zp


def subset_acceptance_probability(ensemble, deletion_index, z, target, kernel):
    i = int(deletion_index)
    log_pi_z = _log_pi_z_all(ensemble, z)
    if log_pi_z[i] == -math.inf:
        return 0.0
    q_wz = kernel.pdf(ensemble.u_walkers, z)
    q_zw = q_wz if kernel.symmetric else kernel.pdf(z, ensemble.u_walkers)
    log_kern = _log_kernel_terms(ensemble, q_wz)
    log_num = _subset_log_numerators(ensemble, log_pi_z, log_kern)
    log_r = _subset_log_ratio(ensemble, i, log_num, log_pi_z, log_kern, q_zw)
    return 1.0 if log_r >= 0 else math.exp(log_r)


def interacting_step(ensemble, target, kernel, rng):
    """One teleport attempt on the u-block; v is left unchanged."""
    j, z = propose_clone(ensemble, kernel, rng)
    ensemble.generation += 1
    log_pi_z = _log_pi_z_all(ensemble, z)
    if np.all(log_pi_z == -math.inf):
        _maybe_rebuild(ensemble)
        return StepOutcome(j, j, z, False, False, 0.0)
    q_wz = kernel.pdf(ensemble.u_walkers, z)
    q_zw = q_wz if kernel.symmetric else kernel.pdf(z, ensemble.u_walkers)
    log_kern = _log_kernel_terms(ensemble, q_wz)
    log_num = _subset_log_numerators(ensemble, log_pi_z, log_kern)
    _weights_from_logs(log_num)
    i = _draw_index(log_num, rng.random())
    log_r = _subset_log_ratio(ensemble, i, log_num, log_pi_z, log_kern, q_zw)
    acc = 1.0 if log_r >= 0 else math.exp(log_r)
    accepted = rng.random() < acc
    if accepted:
        _install(ensemble, i, z, log_pi_z[i], q_wz, q_zw)
    _maybe_rebuild(ensemble)
    return StepOutcome(j, i, z, bool(accepted), i != j, acc)


def _install(ensemble, i, z, log_pi_new, q_wz, q_zw):
    # same O(N) update as WalkerEnsemble.replace, on the u-block caches
    old_col = ensemble._pair[:, i].copy()
    old_sums = ensemble.cached_u_kernel_sums
    new_col = np.array(q_wz, dtype=float)
    new_row = np.array(q_zw, dtype=float)
    new_col[i] = new_row[i] = 0.0
    ensemble._pair[:, i] = new_col
    ensemble._pair[i, :] = new_row
    sums = old_sums + new_col - old_col
    bad = sums < _CANCEL_GUARD * (old_sums + new_col)
    bad[i] = False
    if np.any(bad):
        sums[bad] = ensemble._pair[bad].sum(axis=1)
    sums[i] = new_row.sum()
    ensemble.cached_u_kernel_sums = sums
    ensemble.u_walkers[i] = z
    ensemble.cached_log_pi[i] = log_pi_new


def _maybe_rebuild(ensemble):
    if ensemble.rebuild_every > 0 and ensemble.generation % ensemble.rebuild_every == 0:
        ensemble.rebuild()


def walker_streams(rng, n):
    """Independent per-walker generators for one sweep.

    One 64-bit draw from ``rng`` seeds the sweep; walker ``i`` gets the
    stream keyed by (draw, i), so results do not depend on the order in
    which walkers are processed.
    """
    key = int(rng.integers(2 ** 63))
    return [np.random.default_rng([key, i]) for i in range(n)]


def independent_sweep(ensemble, target, v_kernel, n_inner, rng):
    """``n_inner`` Metropolis-Hastings steps on every v_i with u_i fixed.

    Returns the per-walker acceptance counts.
    """
    if n_inner < 1:
        raise ValueError("n_inner must be >= 1")
    n = ensemble.n_walkers
    counts = np.zeros(n, dtype=int)
    if ensemble.v_walkers.shape[1] == 0:
        return counts
    streams = walker_streams(rng, n)
    for i in range(n):
        g = streams[i]
        u = ensemble.u_walkers[i]
        v = ensemble.v_walkers[i].copy()
        lp = ensemble.cached_log_pi[i]
        for _ in range(n_inner):
            v_new = v_kernel.sample(v, g)
            lp_new = target.log_unnorm(ensemble.joint(u, v_new))
            log_r = lp_new - lp
            if not v_kernel.symmetric:
                log_r += float(v_kernel.log_pdf(v, v_new) - v_kernel.log_pdf(v_new, v))
            if lp_new > -math.inf and (log_r >= 0 or g.random() < math.exp(log_r)):
                v, lp = v_new, lp_new
                counts[i] += 1
        ensemble.v_walkers[i] = v
        ensemble.cached_log_pi[i] = lp
    ensemble.sweeps += 1
    return counts


def alternating_step(ensemble, target, u_kernel, v_kernel, n_inner, rng):
    """Interacting u-step followed by an independent v-sweep.

    The returned outcome describes the u-step; the sweep's acceptance
    counts are attached as ``sweep_accepts``.
    """
    if n_inner < 1:
        raise ValueError("n_inner must be >= 1")
    outcome = interacting_step(ensemble, target, u_kernel, rng)
    outcome.sweep_accepts = independent_sweep(ensemble, target, v_kernel, n_inner, rng)
    return outcome
