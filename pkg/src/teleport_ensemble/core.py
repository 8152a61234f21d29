"""Teleporting-walker ensemble chain.

One step of the chain on X^N targeting prod_i pi(x_i):

1. pick a clone index j uniformly and draw z ~ q(. | x_j);
2. pick a deletion index i with probability proportional to
   [q(x_i | z) + sum_{k != i} q(x_i | x_k)] / pi(x_i);
3. replace x_i by z with probability min(1, Z(x, z) / Z(x', x_i)),
   where Z is the sum of those unnormalized weights.

All weight arithmetic is done in log space.  The ensemble caches
log pi(x_i) and the kernel sums S_i = sum_{k != i} q(x_i | x_k), updated
in O(N) per accepted move and rebuilt in full periodically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DiffersOnMultipleIndices, NonFiniteRatio, NonFiniteWeight
from .kernels import pairwise_density

DEFAULT_REBUILD_EVERY = 10_000
# recompute a cached sum directly when an update cancels more than this
_CANCEL_GUARD = 1e-6


def logsumexp(a):
    m = np.max(a)
    if not np.isfinite(m):
        return m
    return m + math.log(np.sum(np.exp(a - m)))


class WalkerEnsemble:
    """N walkers with cached log-densities and kernel sums.

    Parameters
    ----------
    walkers : array_like, shape (N, d)
    target : object with ``log_unnorm``
    kernel : proposal kernel
    rebuild_every : int
        Number of steps between full O(N^2) cache rebuilds.
    """

    def __init__(self, walkers, target, kernel, rebuild_every=DEFAULT_REBUILD_EVERY):
        w = np.array(walkers, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.shape[0] < 1:
            raise ValueError("need at least one walker")
        self.walkers = w
        self.target = target
        self.kernel = kernel
        self.rebuild_every = int(rebuild_every)
        self.generation = 0
        self.rebuild()

    @property
    def n_walkers(self):
        return self.walkers.shape[0]

    def rebuild(self):
        self.cached_log_pi = np.array([self.target.log_unnorm(x) for x in self.walkers])
        self._pair = pairwise_density(self.kernel, self.walkers)
        self.cached_kernel_sums = self._pair.sum(axis=1)

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.walkers = self.walkers.copy()
        new.cached_log_pi = self.cached_log_pi.copy()
        new.cached_kernel_sums = self.cached_kernel_sums.copy()
        new._pair = self._pair.copy()
        return new

    def direct_kernel_sums(self):
        """O(N^2) double-loop recomputation, independent of the cache."""
        n = self.n_walkers
        out = np.zeros(n)
        for i in range(n):
            for k in range(n):
                if k != i:
                    out[i] += float(self.kernel.pdf(self.walkers[i], self.walkers[k]))
        return out

    def replace(self, i, z, log_pi_z, q_walkers_given_z, q_z_given_walkers):
        """Install ``z`` at index ``i`` and update the caches in O(N)."""
        old_col = self._pair[:, i].copy()
        old_sums = self.cached_kernel_sums
        new_col = np.array(q_walkers_given_z, dtype=float)
        new_row = np.array(q_z_given_walkers, dtype=float)
        new_col[i] = 0.0
        new_row[i] = 0.0
        self._pair[:, i] = new_col
        self._pair[i, :] = new_row
        sums = old_sums + new_col - old_col
        scale = old_sums + new_col
        bad = sums < _CANCEL_GUARD * scale
        bad[i] = False
        if np.any(bad):
            sums[bad] = self._pair[bad].sum(axis=1)
        sums[i] = new_row.sum()
        self.cached_kernel_sums = sums
        self.walkers[i] = z
        self.cached_log_pi[i] = log_pi_z


@dataclass
class WeightComputation:
    weights: np.ndarray
    z_value: float
    per_walker_numerators: np.ndarray
    log_numerators: np.ndarray
    log_z: float


@dataclass
class StepOutcome:
    clone_index: int
    deletion_index: int
    proposed_point: np.ndarray
    accepted: bool
    teleported: bool
    acceptance_probability: float


def propose_clone(ensemble, kernel, rng):
    j = int(rng.integers(ensemble.n_walkers))
    z = kernel.sample(ensemble.walkers[j], rng)
    return j, z


def _log_numerators(ensemble, q_walkers_given_z):
    with np.errstate(divide="ignore"):
        return np.log(ensemble.cached_kernel_sums + q_walkers_given_z) - ensemble.cached_log_pi


def _weights_from_logs(log_num):
    if np.any(np.isnan(log_num)) or np.any(log_num == np.inf):
        raise NonFiniteWeight("importance weight numerator is not finite")
    log_z = logsumexp(log_num)
    if not np.isfinite(log_z):
        raise NonFiniteWeight("all importance weights vanish")
    weights = np.exp(log_num - log_z)
    return WeightComputation(weights, math.exp(log_z), np.exp(log_num), log_num, log_z)


def importance_weights(ensemble, z, target, kernel):
    """Deletion weights w_i(x, z) and their normalizer Z(x, z)."""
    if not np.all(np.isfinite(ensemble.cached_log_pi)):
        raise NonFiniteWeight("ensemble contains walkers outside the support")
    q_wz = kernel.pdf(ensemble.walkers, z)
    return _weights_from_logs(_log_numerators(ensemble, q_wz))


def _log_ratio(log_num, i, log_b):
    """log Z(x, z) - log Z(x', x_i) from the Z(x, z) summands.

    For l != i the summands of Z(x', x_i) coincide with those of
    Z(x, z); only the i-th is replaced by sum_k q(z | x_k) / pi(z).
    """
    log_z = logsumexp(log_num)
    swapped = log_num.copy()
    swapped[i] = log_b
    log_zp = logsumexp(swapped)
    if not (np.isfinite(log_z) and np.isfinite(log_zp)):
        raise NonFiniteRatio("Z(x, z) or Z(x', x_i) is zero or not finite")
    return log_z - log_zp


def acceptance_probability(ensemble, deletion_index, z, target, kernel):
    """min(1, Z(x, z) / Z(x', x_i)) with x' = x with x_i replaced by z."""
    i = int(deletion_index)
    if not 0 <= i < ensemble.n_walkers:
        raise IndexError("deletion index out of range")
    log_pi_z = target.log_unnorm(z)
    if log_pi_z == -math.inf:
        return 0.0
    q_wz = kernel.pdf(ensemble.walkers, z)
    q_zw = q_wz if kernel.symmetric else kernel.pdf(z, ensemble.walkers)
    log_num = _log_numerators(ensemble, q_wz)
    with np.errstate(divide="ignore"):
        log_b = math.log(float(np.sum(q_zw))) if np.sum(q_zw) > 0 else -math.inf
    log_b -= log_pi_z
    return min(1.0, math.exp(min(0.0, _log_ratio(log_num, i, log_b))))


def _draw_index(log_num, u):
    """Inverse-CDF categorical draw from unnormalized log-weights."""
    p = np.exp(log_num - np.max(log_num))
    cdf = np.cumsum(p)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, len(cdf) - 1)


def _draw_and_ratio(log_num, u, sum_qzw, log_pi_z):
    """Deletion draw and log acceptance ratio sharing one exponentiation.

    Same arithmetic as ``_draw_index`` followed by ``_log_ratio``.
    """
    m = log_num.max()
    if not math.isfinite(m) or np.isnan(log_num).any():
        _weights_from_logs(log_num)  # raises with the precise reason
    p = np.exp(log_num - m)
    cdf = np.cumsum(p)
    s = cdf[-1]
    i = min(int(np.searchsorted(cdf, u * s, side="right")), len(cdf) - 1)
    log_b = (math.log(sum_qzw) if sum_qzw > 0 else -math.inf) - log_pi_z
    if log_b > m:
        return i, _log_ratio(log_num, i, log_b)
    p[i] = math.exp(log_b - m)
    s_swapped = float(p.sum())
    if not s_swapped > 0:
        raise NonFiniteRatio("Z(x', x_i) vanishes")
    return i, math.log(s) - math.log(s_swapped)


def ensemble_step(ensemble, target, kernel, rng):
    """Advance the ensemble by one clone/delete/accept step in place."""
    j, z = propose_clone(ensemble, kernel, rng)
    log_pi_z = target.log_unnorm(z)
    ensemble.generation += 1
    if log_pi_z == -math.inf:
        _maybe_rebuild(ensemble)
        return StepOutcome(j, j, z, False, False, 0.0)
    q_wz = kernel.pdf(ensemble.walkers, z)
    q_zw = q_wz if kernel.symmetric else kernel.pdf(z, ensemble.walkers)
    log_num = _log_numerators(ensemble, q_wz)
    i, log_r = _draw_and_ratio(log_num, rng.random(), float(q_zw.sum()), log_pi_z)
    acc = 1.0 if log_r >= 0 else math.exp(log_r)
    accepted = rng.random() < acc
    if accepted:
        ensemble.replace(i, z, log_pi_z, q_wz, q_zw)
    _maybe_rebuild(ensemble)
    return StepOutcome(j, i, z, bool(accepted), i != j, acc)


def _maybe_rebuild(ensemble):
    if ensemble.rebuild_every > 0 and ensemble.generation % ensemble.rebuild_every == 0:
        ensemble.rebuild()


def full_mh_ratio_oracle(ensemble, proposed, target, kernel):
    """Raw Metropolis-Hastings ratio Pi(x') Q(x | x') / (Pi(x) Q(x' | x)).

    Evaluated from the proposal likelihood
    Q(x' | x) = w_i(x, x'_i) * (1/N) sum_k q(x'_i | x_k) by direct loops,
    without the cancellation that reduces it to a ratio of Z's.
    """
    x = np.asarray(ensemble.walkers if hasattr(ensemble, "walkers") else ensemble, dtype=float)
    xp = np.asarray(proposed.walkers if hasattr(proposed, "walkers") else proposed, dtype=float)
    if x.ndim == 1:
        x, xp = x[:, None], xp[:, None]
    differs = [k for k in range(x.shape[0]) if not np.array_equal(x[k], xp[k])]
    if not differs:
        return 1.0
    if len(differs) != 1:
        raise DiffersOnMultipleIndices(f"ensembles differ at indices {differs}")
    i = differs[0]

    def q(a, b):
        return float(kernel.pdf(a, b))

    def pi(a):
        return math.exp(target.log_unnorm(a))

    def proposal_likelihood(src, dst):
        n = src.shape[0]
        z = dst[i]
        numer = []
        for l in range(n):
            s = q(src[l], z)
            for k in range(n):
                if k != l:
                    s += q(src[l], src[k])
            numer.append(s / pi(src[l]))
        w_i = numer[i] / sum(numer)
        mix = sum(q(z, src[k]) for k in range(n)) / n
        return w_i * mix

    log_pi_ratio = target.log_unnorm(xp[i]) - target.log_unnorm(x[i])
    return math.exp(log_pi_ratio) * proposal_likelihood(xp, x) / proposal_likelihood(x, xp)
