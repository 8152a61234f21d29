"""Target log-densities and the elementary log-pdfs used as priors.

A target is any object with ``log_unnorm(x) -> float`` taking a 1-D
state array.  Out-of-support arguments give ``-inf``, never an exception.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

_LOG_PI = math.log(math.pi)
_LN2 = math.log(2.0)


def double_well_log(x, beta):
    """Unnormalized log-density -beta * (x**4 - x**2) of the double well."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    return -beta * (x2 * x2 - x2)


class DoubleWellTarget:
    """pi(x) = exp(-beta (x^4 - x^2)), modes at +/- sqrt(1/2)."""

    def __init__(self, beta):
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.beta = float(beta)

    def log_unnorm(self, x):
        return float(double_well_log(np.asarray(x).reshape(-1)[0], self.beta))

    def log_unnorm_grid(self, nodes):
        return double_well_log(nodes, self.beta)


class TabulatedTarget:
    """Finite-state target with a table of log-probabilities.

    ``log_table`` has one axis per state coordinate, so a product space
    X1 x X2 uses a 2-D table indexed by ``(u, v)`` codes.
    """

    def __init__(self, log_table):
        self.log_table = np.asarray(log_table, dtype=float)

    @classmethod
    def from_probabilities(cls, probs):
        with np.errstate(divide="ignore"):
            return cls(np.log(np.asarray(probs, dtype=float)))

    def log_unnorm(self, x):
        idx = tuple(int(v) for v in np.asarray(x).reshape(-1))
        return float(self.log_table[idx])


# --- elementary log-pdfs --------------------------------------------------

def half_cauchy_log_pdf(x, scale):
    """log of 2 / (pi s (1 + (x/s)^2)) on x > 0, -inf elsewhere."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        val = math.log(2.0 / (math.pi * scale)) - np.log1p((x / scale) ** 2)
    return np.where(x > 0, val, -np.inf)


def student_t_log_pdf(x, nu, scale):
    x = np.asarray(x, dtype=float)
    const = (gammaln((nu + 1) / 2) - gammaln(nu / 2)
             - 0.5 * math.log(nu * math.pi) - math.log(scale))
    return const - (nu + 1) / 2 * np.log1p((x / scale) ** 2 / nu)


def standard_normal_log_pdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * math.log(2 * math.pi) - 0.5 * x * x


def chi_log_pdf(x, k):
    """Chi distribution with ``k`` degrees of freedom; -inf for x <= 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (1 - k / 2) * _LN2 - gammaln(k / 2) + (k - 1) * np.log(x) - x * x / 2
    return np.where(x > 0, val, -np.inf)


def dist_log_pdf(family, x, **params):
    """Dispatch by family name.

    ``half_cauchy`` takes ``scale``; ``student_t`` takes ``nu`` and
    ``scale``; ``standard_normal`` takes nothing.  Scalars in, scalars out.
    """
    if family == "half_cauchy":
        out = half_cauchy_log_pdf(x, params.get("scale", 1.0))
    elif family == "student_t":
        out = student_t_log_pdf(x, params["nu"], params.get("scale", 1.0))
    elif family == "standard_normal":
        out = standard_normal_log_pdf(x)
    else:
        raise ValueError(f"unknown family {family!r}")
    return out if np.ndim(out) else float(out)
