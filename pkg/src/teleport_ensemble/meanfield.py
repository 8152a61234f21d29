"""Large-N continuum dynamics on a uniform 1-D grid.

Densities are arrays of nodal values integrated with weight ``dx`` per
node.  A finite state space is the special case ``dx = 1``.  Kernels are
column-normalized: ``sum_g Q[g, h] dx = 1`` and ``(Q rho)_g =
sum_h Q[g, h] rho_h dx``.

Two evolutions are integrated by forward Euler:

* nonlinear (interacting ensemble): rho' = (Z - rho/pi) Q rho / Z with
  Z = int (Q rho / pi) rho dx;
* linear (independent Metropolized walkers): rho' = Q~ rho - rho.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientWindow, NegativityBreach, NonFiniteRhs

NEGATIVITY_FLOOR = -1e-8


@dataclass(frozen=True)
class Grid:
    lower: float
    upper: float
    size: int

    def __post_init__(self):
        if self.size < 2 or not self.upper > self.lower:
            raise ValueError("grid needs at least two nodes and upper > lower")

    @property
    def dx(self):
        return (self.upper - self.lower) / (self.size - 1)

    @property
    def nodes(self):
        return np.linspace(self.lower, self.upper, self.size)


@dataclass
class GridKernel:
    matrix: np.ndarray
    dx: float = 1.0

    def apply(self, rho):
        return self.matrix @ rho * self.dx


def normalize(values, dx):
    values = np.asarray(values, dtype=float)
    return values / (values.sum() * dx)


def build_grid_kernel(grid, sigma):
    """Gaussian proposal exp(-(x - z)^2 / 2 sigma^2), columns renormalized on the grid."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = grid.nodes
    d = x[:, None] - x[None, :]
    q = np.exp(-d * d / (2 * sigma * sigma))
    q /= q.sum(axis=0, keepdims=True) * grid.dx
    return GridKernel(q, grid.dx)


def metropolize_matrix(q, pi, dx=1.0):
    q = np.asarray(q, dtype=float)
    pi = np.asarray(pi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        # two separate quotients: the products can underflow to 0/0
        ratio = (pi[:, None] / pi[None, :]) * (q.T / q)
    out = np.where(q > 0, q * np.minimum(1.0, ratio), 0.0)
    np.fill_diagonal(out, 0.0)
    np.fill_diagonal(out, (1.0 - out.sum(axis=0) * dx) / dx)
    return out


def metropolize_kernel(kernel, pi):
    """Metropolis-corrected kernel with pi as fixed point; rejected mass stays put."""
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise ValueError("pi must be strictly positive on the grid")
    return GridKernel(metropolize_matrix(kernel.matrix, pi, kernel.dx), kernel.dx)


def z_value(rho, pi, kernel):
    q_rho = kernel.apply(rho)
    return float(np.sum(q_rho / pi * rho) * kernel.dx), q_rho


def nonlinear_rhs(rho, pi, kernel, return_z=False):
    """Right-hand side (Z - rho/pi) Q rho / Z, optionally with Z.

    The deletion term is scaled by the current mass of ``rho``.  This is
    the identity on unit-mass densities, and it keeps the mass direction
    neutral: without it a mass error m - 1 grows like e^t under Euler.
    """
    z, q_rho = z_value(rho, pi, kernel)
    if not (np.isfinite(z) and z > 0):
        raise NonFiniteRhs(f"Z_rho = {z!r}")
    mass = float(np.sum(rho) * kernel.dx)
    rhs = q_rho - (rho / pi) * q_rho * (mass / z)
    return (rhs, z) if return_z else rhs


def linear_rhs(rho, kernel):
    """Q~ rho - rho for a Metropolized kernel."""
    return kernel.apply(rho) - rho


def e_statistic(rho, nodes, dx):
    """1/2 minus the mass on x >= 0 (a node at exactly 0 counts half)."""
    nodes = np.asarray(nodes, dtype=float)
    pos = np.sum(rho[nodes > 0]) + 0.5 * np.sum(rho[nodes == 0])
    return 0.5 - float(pos * dx)


def chi2_divergence(p, q, dx=1.0):
    """int p^2 / q dx - 1, evaluated as int (p - q)^2 / q dx.

    Returns +inf when q vanishes where p does not.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) & (p > 0)):
        return math.inf
    mask = q > 0
    d = p[mask] - q[mask]
    return float(np.sum(d * d / q[mask]) * dx)


def double_well_initial(nodes, beta, dx):
    """90/10 Gaussian mixture at the two modes, renormalized on the grid."""
    c = math.sqrt(0.5)
    rho = 0.9 * np.exp(-10 * beta * (nodes + c) ** 2) + 0.1 * np.exp(-10 * beta * (nodes - c) ** 2)
    return normalize(rho, dx)


@dataclass
class Trajectory:
    """Observer samples from an Euler run."""

    times: list = field(default_factory=list)
    e_values: list = field(default_factory=list)
    chi2_values: list = field(default_factory=list)
    min_values: list = field(default_factory=list)
    mass_errors: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    final: np.ndarray | None = None

    def as_arrays(self):
        return (np.array(self.times), np.array(self.e_values),
                np.array(self.chi2_values), np.array(self.min_values))


def euler_integrate(rhs_kind, rho0, pi, kernel, dt, t_end, nodes=None, stride=1,
                    snapshot_times=()):
    """Forward Euler for the nonlinear or linear dynamics.

    Parameters
    ----------
    rhs_kind : {"nonlinear", "linear"}
        For "linear" ``kernel`` must already be Metropolized.
    rho0, pi : ndarray
        Initial density and target on the nodes (``pi`` is renormalized).
    nodes : ndarray, optional
        Node coordinates for the E statistic; E is recorded as nan
        without them.
    stride : int
        Record observers every ``stride`` steps (and at the last step).
    snapshot_times : sequence of float
        Store a copy of rho at the first step at or after each time.

    Raises
    ------
    NegativityBreach
        If any nodal value drops below -1e-8.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if rhs_kind not in ("nonlinear", "linear"):
        raise ValueError(f"unknown dynamics {rhs_kind!r}")
    dx = kernel.dx
    pi = normalize(pi, dx)
    rho = np.array(rho0, dtype=float)
    n_steps = int(round(t_end / dt))
    traj = Trajectory()
    pending = sorted(snapshot_times)

    def record(k, rho):
        t = k * dt
        traj.times.append(t)
        traj.e_values.append(e_statistic(rho, nodes, dx) if nodes is not None else math.nan)
        traj.chi2_values.append(chi2_divergence(pi, rho, dx))
        traj.min_values.append(float(rho.min()))
        traj.mass_errors.append(float(rho.sum() * dx - 1.0))

    def snap(k, rho):
        t = k * dt
        while pending and t >= pending[0] - 1e-9 * dt:
            traj.snapshots[pending.pop(0)] = (t, rho.copy())

    record(0, rho)
    snap(0, rho)
    for k in range(1, n_steps + 1):
        if rhs_kind == "nonlinear":
            rho = rho + dt * nonlinear_rhs(rho, pi, kernel)
        else:
            rho = rho + dt * linear_rhs(rho, kernel)
        if rho.min() < NEGATIVITY_FLOOR:
            raise NegativityBreach(f"min rho = {rho.min():.3e} at t = {k * dt:.6g}")
        if k % stride == 0 or k == n_steps:
            record(k, rho)
        snap(k, rho)
    traj.final = rho
    return traj


def fit_decay_rate(times, values, t_range=None, min_points=10):
    """Least-squares fit of log(value) = intercept - rate * t.

    By default the window is the tail where value < 0.1 max(value) and
    value > 100 eps max(value).  ``t_range = (t0, t1)`` instead fits every
    positive value with t0 <= t <= t1.

    Returns
    -------
    rate, intercept, diagnostics : float, float, dict
        ``diagnostics`` holds ``r2``, ``n_points`` and the fitted time span.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t_range is None:
        vmax = float(np.nanmax(v))
        mask = (v < 0.1 * vmax) & (v > 100 * np.finfo(float).eps * vmax)
    else:
        mask = (t >= t_range[0]) & (t <= t_range[1]) & (v > 0)
    if np.count_nonzero(mask) < min_points:
        raise InsufficientWindow(f"only {np.count_nonzero(mask)} points in the fit window")
    tt, lv = t[mask], np.log(v[mask])
    slope, intercept = np.polyfit(tt, lv, 1)
    resid = lv - (slope * tt + intercept)
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    return float(-slope), float(intercept), {
        "r2": r2, "n_points": int(mask.sum()), "t_start": float(tt[0]), "t_end": float(tt[-1])}
