"""Proposal transition kernels q(y | x).

Every kernel exposes ``sample(x, rng)`` and a broadcasting ``pdf(y, x)``
returning q(y | x).  States are 1-D float arrays of fixed length; for
finite state spaces the entries are integer codes.
"""
from __future__ import annotations

import numpy as np

_LOG_2PI = np.log(2.0 * np.pi)


class GaussianKernel:
    """Gaussian random-walk proposal N(x, diag(variance)).

    Parameters
    ----------
    variance : float or array_like
        A scalar gives the isotropic kernel with variance ``beta**2``; a
        vector gives one variance per coordinate (the diagonal matrix D).
        Zero variance is allowed for sampling only (the proposal is then
        the identity map).
    dim : int, optional
        State dimension, required when ``variance`` is a scalar and the
        kernel is used on states longer than one coordinate.
    """

    symmetric = True

    def __init__(self, variance, dim=None):
        var = np.asarray(variance, dtype=float)
        if np.any(var < 0):
            raise ValueError("variance must be nonnegative")
        if var.ndim == 0:
            var = np.full(1 if dim is None else int(dim), float(var))
        elif dim is not None and var.shape != (dim,):
            raise ValueError("variance vector does not match dim")
        self.variance = var
        self.std = np.sqrt(var)
        self.dim = var.shape[0]
        self._degenerate = bool(np.any(var == 0))
        self._inv_var = np.where(var > 0, 1.0 / np.where(var > 0, var, 1.0), np.inf)
        with np.errstate(divide="ignore"):
            self._log_norm = -0.5 * (self.dim * _LOG_2PI + np.sum(np.log(var)))

    def sample(self, x, rng):
        x = np.asarray(x, dtype=float)
        return x + self.std * rng.standard_normal(self.dim)

    def log_pdf(self, y, x):
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if self._degenerate:
            # degenerate width: point mass at x
            hit = np.all(d == 0, axis=-1)
            return np.where(hit, np.inf, -np.inf)
        return self._log_norm - 0.5 * ((d * d) @ self._inv_var)

    def pdf(self, y, x):
        return np.exp(self.log_pdf(y, x))

    def __repr__(self):
        return f"GaussianKernel(variance={self.variance.tolist()})"


class TabulatedKernel:
    """Finite-state kernel given by a column-stochastic matrix.

    ``matrix[y, x]`` is q(y | x); columns must sum to one.  States are
    arrays whose single entry is the integer state code.
    """

    def __init__(self, matrix, check=True):
        q = np.asarray(matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("kernel matrix must be square")
        if check:
            if np.any(q < 0):
                raise ValueError("kernel matrix must be nonnegative")
            if not np.allclose(q.sum(axis=0), 1.0, atol=1e-12):
                raise ValueError("kernel matrix columns must sum to 1")
        self.matrix = q
        self.n_states = q.shape[0]
        self.symmetric = bool(np.array_equal(q, q.T))
        self._cdf = np.cumsum(q, axis=0)

    def sample(self, x, rng):
        col = int(np.asarray(x).reshape(-1)[0])
        cdf = self._cdf[:, col]
        y = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return np.array([float(min(y, self.n_states - 1))])

    def pdf(self, y, x):
        yi = np.asarray(y)[..., 0].astype(int)
        xi = np.asarray(x)[..., 0].astype(int)
        return self.matrix[yi, xi]

    def log_pdf(self, y, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(y, x))


def pairwise_density(kernel, points):
    """Matrix ``M[l, k] = q(points[l] | points[k])`` with zero diagonal."""
    pts = np.asarray(points, dtype=float)
    m = np.asarray(kernel.pdf(pts[:, None, :], pts[None, :, :]), dtype=float)
    np.fill_diagonal(m, 0.0)
    return m
