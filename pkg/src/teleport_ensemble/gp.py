"""Gaussian-process hyperparameter posteriors and synthetic regression data.

Three posteriors are provided, each as a plain function and as a target
object usable by the samplers:

* univariate squared-exponential kernel, Gaussian noise, theta = (alpha, rho, sigma);
* multivariate kernel exp(-d^T L L^T d) with a Bartlett (Wishart) prior on L;
* univariate kernel with Student-t noise in whitened coordinates w.

Positivity constraints are enforced by returning ``-inf``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import NotFactorizable
from .targets import chi_log_pdf, student_t_log_pdf

PRIOR_SCALE = 3.0
STUDENT_NU = 2.0
_MAX_JITTER = 1e-6
_LOG_2PI = math.log(2 * math.pi)


# --- data types -----------------------------------------------------------

@dataclass(frozen=True)
class GPDataset:
    inputs: np.ndarray  # shape (m, n)
    y: np.ndarray       # shape (m,)

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.shape[0] != y.shape[0] or y.shape[0] < 1:
            raise ValueError("inputs and observations must have the same length >= 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "y", y)

    @property
    def m(self):
        return self.y.shape[0]

    @property
    def n(self):
        return self.inputs.shape[1]


@dataclass(frozen=True)
class GPUnivariateHyper:
    alpha: float
    rho: float
    sigma: float

    def in_support(self):
        return self.alpha > 0 and self.rho > 0 and self.sigma > 0

    def as_array(self):
        return np.array([self.alpha, self.rho, self.sigma])


@dataclass(frozen=True)
class BartlettMatrix:
    """Lower-triangular factor L with positive diagonal c_i.

    The kernel metric is L L^T.  Writing the factor as upper triangular
    and using Z Z^T instead gives the same Wishart law.
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.tril(np.atleast_2d(np.asarray(self.matrix, dtype=float)))
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def diag(self):
        return np.diag(self.matrix)

    def in_support(self):
        return bool(np.all(self.diag > 0))

    def pack(self):
        """Row-major lower-triangle entries: c1, z21, c2, z31, z32, c3, ..."""
        return self.matrix[np.tril_indices(self.n)]

    @classmethod
    def unpack(cls, values, n):
        mat = np.zeros((n, n))
        mat[np.tril_indices(n)] = values
        return cls(mat)


@dataclass(frozen=True)
class WhitenedState:
    theta: GPUnivariateHyper
    w: np.ndarray


@dataclass(frozen=True)
class CholeskyFactor:
    lower: np.ndarray
    jitter_used: float


# --- linear algebra -------------------------------------------------------

def _sq_dists(inputs):
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    diff = x[:, None, :] - x[None, :, :]
    return diff


def se_kernel_matrix(inputs, amplitude, metric):
    """Squared-exponential kernel matrix.

    ``metric`` is either a positive scalar length-scale rho, giving
    alpha^2 exp(-|d|^2 / rho^2), or a lower-triangular matrix L, giving
    alpha^2 exp(-d^T L L^T d).
    """
    diff = _sq_dists(inputs)
    metric = np.asarray(metric, dtype=float)
    if metric.ndim == 0:
        q = np.sum(diff * diff, axis=-1) / (float(metric) ** 2)
    else:
        proj = diff @ metric  # rows are (L^T d)^T
        q = np.sum(proj * proj, axis=-1)
    return amplitude ** 2 * np.exp(-q)


def cholesky_jittered(a, base_jitter=1e-10):
    """Cholesky factor of ``a + jitter * mean(diag a) * I``.

    The relative jitter starts at ``base_jitter`` and grows by factors of
    ten up to 1e-6.  ``jitter_used`` is the absolute amount added to the
    diagonal.
    """
    a = np.asarray(a, dtype=float)
    scale = float(np.mean(np.diag(a)))
    rel = base_jitter
    eye = np.eye(a.shape[0])
    while rel <= _MAX_JITTER * (1 + 1e-9):
        added = rel * scale
        try:
            lower = np.linalg.cholesky(a + added * eye)
        except np.linalg.LinAlgError:
            rel *= 10.0
            continue
        if np.all(np.isfinite(lower)):
            return CholeskyFactor(lower, added)
        rel *= 10.0
    raise NotFactorizable("matrix not positive definite even with 1e-6 relative jitter")


# --- priors ---------------------------------------------------------------

def bartlett_log_prior(z):
    """Bartlett log-density: N(0,1) below the diagonal, chi(n-i+1) on c_i."""
    mat = z.matrix if isinstance(z, BartlettMatrix) else np.asarray(z, dtype=float)
    n = mat.shape[0]
    c = np.diag(mat)
    if np.any(c <= 0):
        return -math.inf
    off = mat[np.tril_indices(n, -1)]
    total = float(np.sum(-0.5 * _LOG_2PI - 0.5 * off * off))
    for i in range(n):
        total += float(chi_log_pdf(c[i], n - i))
    return total


def _half_cauchy(x, scale=PRIOR_SCALE):
    # scalar fast path of half_cauchy_log_pdf; called on every target evaluation
    x = float(x)
    if not x > 0:
        return -math.inf
    r = x / scale
    return math.log(2.0 / (math.pi * scale)) - math.log1p(r * r)


# --- posteriors -----------------------------------------------------------

def _gaussian_loglik(k, sigma, y):
    a = k.copy()
    a.flat[::a.shape[0] + 1] += sigma * sigma
    lower, info = lapack.dpotrf(a, lower=1, clean=0, overwrite_a=1)
    if info != 0:
        # sigma^2 far below the kernel's numerical rank floor
        lower = cholesky_jittered(k + (sigma * sigma) * np.eye(k.shape[0])).lower
    alpha, info = lapack.dtrtrs(lower, y, lower=1)
    if info != 0:
        alpha = solve_triangular(lower, y, lower=True, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(lower.diagonal())))
    return -0.5 * logdet - 0.5 * float(alpha @ alpha) - 0.5 * len(y) * _LOG_2PI


def gp_gaussian_logpost(theta, dataset):
    """Log posterior of GP hyperparameters under Gaussian noise.

    ``theta`` is a :class:`GPUnivariateHyper` or a tuple
    ``(alpha, BartlettMatrix, sigma)``.  Includes the -m/2 log(2 pi)
    constant and normalized priors.
    """
    if isinstance(theta, GPUnivariateHyper):
        if not theta.in_support():
            return -math.inf
        k = se_kernel_matrix(dataset.inputs, theta.alpha, theta.rho)
        sigma = theta.sigma
        log_prior = (_half_cauchy(theta.alpha) + _half_cauchy(theta.rho)
                     + _half_cauchy(theta.sigma))
    else:
        alpha, bart, sigma = theta
        if not isinstance(bart, BartlettMatrix):
            bart = BartlettMatrix(bart)
        if not (alpha > 0 and sigma > 0 and bart.in_support()):
            return -math.inf
        k = se_kernel_matrix(dataset.inputs, alpha, bart.matrix)
        log_prior = _half_cauchy(alpha) + _half_cauchy(sigma) + bartlett_log_prior(bart)
    return _gaussian_loglik(k, sigma, dataset.y) + log_prior


def _whitened_parts(theta, w, dataset):
    if not theta.in_support():
        return None
    k = se_kernel_matrix(dataset.inputs, theta.alpha, theta.rho)
    lower = cholesky_jittered(k).lower
    eps = dataset.y + lower @ np.asarray(w, dtype=float)
    return lower, eps


def gp_nongaussian_logpost(state, dataset, nu=STUDENT_NU):
    """Log posterior in whitened coordinates, eps = y + chol(K_theta) w.

    Returns -|w|^2/2 + log p(theta) + sum_i log t_nu(eps_i; scale sigma).
    """
    theta, w = state.theta, np.asarray(state.w, dtype=float)
    parts = _whitened_parts(theta, w, dataset)
    if parts is None:
        return -math.inf
    _, eps = parts
    log_prior = (_half_cauchy(theta.alpha) + _half_cauchy(theta.rho)
                 + _half_cauchy(theta.sigma))
    return (-0.5 * float(w @ w) + log_prior
            + float(np.sum(student_t_log_pdf(eps, nu, theta.sigma))))


def gp_nongaussian_grad_w(state, dataset, nu=STUDENT_NU):
    """Gradient of :func:`gp_nongaussian_logpost` with respect to w."""
    theta, w = state.theta, np.asarray(state.w, dtype=float)
    lower, eps = _whitened_parts(theta, w, dataset)
    s2 = theta.sigma ** 2
    score = -(nu + 1) * eps / (nu * s2 + eps * eps)
    return -w + lower.T @ score


# --- sampler-facing targets -------------------------------------------------

class GaussianGPTarget:
    """Posterior over theta = (alpha, rho, sigma) as a flat 3-vector."""

    dim = 3

    def __init__(self, dataset):
        self.dataset = dataset
        diff = _sq_dists(dataset.inputs)
        self._sq = np.sum(diff * diff, axis=-1)
        self._eye = np.eye(dataset.m)

    def log_unnorm(self, theta):
        alpha, rho, sigma = (float(t) for t in theta)
        if not (alpha > 0 and rho > 0 and sigma > 0):
            return -math.inf
        k = (alpha * alpha) * np.exp(-self._sq / (rho * rho))
        return (_gaussian_loglik(k, sigma, self.dataset.y) + _half_cauchy(alpha)
                + _half_cauchy(rho) + _half_cauchy(sigma))


class MultivariateGPTarget:
    """Posterior over (alpha, packed Bartlett factor, sigma)."""

    def __init__(self, dataset):
        self.dataset = dataset
        self.n = dataset.n
        self.n_tri = self.n * (self.n + 1) // 2
        self.dim = self.n_tri + 2
        self._diff = _sq_dists(dataset.inputs)
        self._diag_pos = [i * (i + 3) // 2 for i in range(self.n)]

    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta[0], BartlettMatrix.unpack(theta[1:1 + self.n_tri], self.n), theta[-1]

    def log_unnorm(self, theta):
        theta = np.asarray(theta, dtype=float)
        alpha, sigma = theta[0], theta[-1]
        if not (alpha > 0 and sigma > 0) or np.any(theta[1:1 + self.n_tri][self._diag_pos] <= 0):
            return -math.inf
        _, bart, _ = self.split(theta)
        proj = self._diff @ bart.matrix
        k = alpha * alpha * np.exp(-np.sum(proj * proj, axis=-1))
        return (_gaussian_loglik(k, sigma, self.dataset.y) + _half_cauchy(alpha)
                + _half_cauchy(sigma) + bartlett_log_prior(bart))


class NonGaussianGPTarget:
    """Joint posterior over x = (alpha, rho, sigma, w_1..w_m).

    The first three coordinates form the interacting block.  Cholesky
    factors of K_theta are cached per theta, since a v-sweep evaluates
    many w at a fixed theta.
    """

    u_dim = 3

    def __init__(self, dataset, nu=STUDENT_NU, cache_size=256):
        self.dataset = dataset
        self.nu = nu
        self.dim = 3 + dataset.m
        diff = _sq_dists(dataset.inputs)
        self._sq = np.sum(diff * diff, axis=-1)
        self._chol = lru_cache(maxsize=cache_size)(self._chol_uncached)

    def _chol_uncached(self, alpha, rho):
        k = (alpha * alpha) * np.exp(-self._sq / (rho * rho))
        return cholesky_jittered(k).lower

    def log_unnorm(self, x):
        x = np.asarray(x, dtype=float)
        alpha, rho, sigma = float(x[0]), float(x[1]), float(x[2])
        if not (alpha > 0 and rho > 0 and sigma > 0):
            return -math.inf
        w = x[3:]
        eps = self.dataset.y + self._chol(alpha, rho) @ w
        return (-0.5 * float(w @ w) + _half_cauchy(alpha) + _half_cauchy(rho)
                + _half_cauchy(sigma)
                + float(np.sum(student_t_log_pdf(eps, self.nu, sigma))))


# --- synthetic data -------------------------------------------------------

def f_true(x):
    """Product over coordinates of 0.3 + 0.4x + 0.5 sin(2.7x) + 1.1/(1+x^2)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    per = 0.3 + 0.4 * x + 0.5 * np.sin(2.7 * x) + 1.1 / (1 + x * x)
    return np.prod(per, axis=-1)


def noise_std(x):
    """0.125 inside |x| < 1.5, 1.25 outside."""
    return np.where(np.abs(x) < 1.5, 0.125, 1.25)


def generate_synthetic_data(n, m, rng):
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    x = rng.standard_normal((m, n))
    delta = (rng.standard_normal((m, n)) * noise_std(x)).sum(axis=1)
    return GPDataset(x, f_true(x) + delta)


def write_dataset_csv(dataset, path, header_comment=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"x_{j + 1}" for j in range(dataset.n)] + ["y"])
        for i in range(dataset.m):
            w.writerow([i] + [format(v, ".17g") for v in dataset.inputs[i]]
                       + [format(dataset.y[i], ".17g")])


def read_dataset_csv(path):
    with open(path, encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    body = np.array(rows[1:], dtype=float)
    return GPDataset(body[:, 1:-1], body[:, -1])


def gaussian_logpost_batch(dataset, alpha, rho, sigma, chunk=4096):
    """Univariate log posterior at many (alpha, rho, sigma) at once.

    Broadcasts the three arrays against each other; points outside the
    support get -inf.  Uses batched Cholesky factorizations, so it is
    meant for quadrature rather than for the samplers.
    """
    a, r, s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (alpha, rho, sigma)))
    shape = a.shape
    a, r, s = a.ravel(), r.ravel(), s.ravel()
    out = np.full(a.shape, -np.inf)
    ok = (a > 0) & (r > 0) & (s > 0)
    diff = _sq_dists(dataset.inputs)
    sq = np.sum(diff * diff, axis=-1)
    y = dataset.y
    eye = np.eye(dataset.m)
    idx = np.flatnonzero(ok)
    for start in range(0, idx.size, chunk):
        sel = idx[start:start + chunk]
        aa, rr, ss = a[sel, None, None], r[sel, None, None], s[sel, None, None]
        k = aa * aa * np.exp(-sq[None] / (rr * rr)) + ss * ss * eye
        lower = np.linalg.cholesky(k)
        alpha_vec = solve_triangular_batch(lower, y)
        logdet = 2.0 * np.sum(np.log(np.diagonal(lower, axis1=1, axis2=2)), axis=1)
        ll = -0.5 * logdet - 0.5 * np.sum(alpha_vec * alpha_vec, axis=1) - 0.5 * len(y) * _LOG_2PI
        prior = sum(_half_cauchy_vec(v) for v in (a[sel], r[sel], s[sel]))
        out[sel] = ll + prior
    return out.reshape(shape)


def solve_triangular_batch(lower, b):
    """Forward substitution L x = b for a stack of lower-triangular L."""
    n = lower.shape[-1]
    x = np.zeros(lower.shape[:-1])
    for i in range(n):
        x[:, i] = (b[i] - np.einsum("kj,kj->k", lower[:, i, :i], x[:, :i])) / lower[:, i, i]
    return x


def _half_cauchy_vec(x, scale=PRIOR_SCALE):
    return math.log(2.0 / (math.pi * scale)) - np.log1p((x / scale) ** 2)
