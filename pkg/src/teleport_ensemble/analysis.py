"""Exact finite-state checks.

Transition matrices here are column-stochastic: ``P[to, from]``, so a
distribution column vector ``p`` evolves as ``P @ p`` and stationarity
of Pi reads ``P @ Pi == Pi``.  The same convention is used for kernels,
``q[y, x] = q(y | x)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import WalkerEnsemble, acceptance_probability, importance_weights
from .errors import TooLarge
from .kernels import TabulatedKernel
from .meanfield import metropolize_matrix
from .subset import SplitEnsemble, subset_acceptance_probability, subset_weights
from .targets import TabulatedTarget

MAX_ENUMERATED_STATES = 10_000


@dataclass
class FiniteInstance:
    pi: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        s = self.pi.shape[0]
        if self.q.shape != (s, s):
            raise ValueError("kernel shape does not match the state count")
        if np.any(self.pi <= 0) or abs(self.pi.sum() - 1) > 1e-12:
            raise ValueError("pi must be strictly positive and sum to one")
        if not np.allclose(self.q.sum(axis=0), 1.0, atol=1e-12):
            raise ValueError("kernel columns must sum to one")

    @property
    def n_states(self):
        return self.pi.shape[0]

    @property
    def full_support(self):
        return bool(np.all(self.q > 0))

    def target(self):
        return TabulatedTarget.from_probabilities(self.pi)

    def kernel(self):
        return TabulatedKernel(self.q)


def metropolize(q, pi):
    """Metropolis correction of a column-stochastic kernel with respect to pi.

    Off-diagonal entries become q(y|x) min(1, pi(y) q(x|y) / (pi(x) q(y|x)));
    the rejected mass goes on the diagonal.
    """
    return metropolize_matrix(q, pi, dx=1.0)


def random_instance(rng, n_states, metropolized=False, concentration=1.0):
    """Random instance with Dirichlet pi and strictly positive kernel columns."""
    pi = rng.dirichlet(np.full(n_states, concentration))
    pi = np.maximum(pi, 1e-3)
    pi /= pi.sum()
    q = rng.dirichlet(np.full(n_states, concentration), size=n_states).T
    q = np.maximum(q, 1e-3)
    q /= q.sum(axis=0)
    if metropolized:
        q = metropolize(q, pi)
    return FiniteInstance(pi, q)


def product_distribution(pi, n_walkers):
    """Pi(x_1..x_N) = prod pi(x_i), flattened in ``itertools.product`` order."""
    out = np.ones(1)
    for _ in range(n_walkers):
        out = np.multiply.outer(out, pi).reshape(-1)
    return out


# --- ensemble transition matrices -------------------------------------------

def exact_ensemble_transition_matrix(instance, n_walkers):
    """One-step matrix of the teleporting ensemble chain by enumeration.

    Sums over clone index j, proposal z, deletion index i and the
    accept/reject outcome, using the sampler's own weight and acceptance
    routines.
    """
    s = instance.n_states
    n_total = s ** n_walkers
    if n_total > MAX_ENUMERATED_STATES:
        raise TooLarge(f"{s}^{n_walkers} ensemble states exceed the enumeration guard")
    target, kernel = instance.target(), instance.kernel()
    states = list(itertools.product(range(s), repeat=n_walkers))
    index = {st: k for k, st in enumerate(states)}
    p = np.zeros((n_total, n_total))
    for col, st in enumerate(states):
        ens = WalkerEnsemble(np.array(st, dtype=float)[:, None], target, kernel,
                             rebuild_every=0)
        # probability of proposing z: (1/N) sum_j q(z | x_j)
        prop_z = instance.q[:, list(st)].mean(axis=1)
        for z in range(s):
            if prop_z[z] == 0:
                continue
            zvec = np.array([float(z)])
            w = importance_weights(ens, zvec, target, kernel).weights
            for i in range(n_walkers):
                if w[i] == 0:
                    continue
                a = acceptance_probability(ens, i, zvec, target, kernel)
                mass = prop_z[z] * w[i]
                new = list(st)
                new[i] = z
                p[index[tuple(new)], col] += mass * a
                p[col, col] += mass * (1 - a)
    return p


def _product_states(n_u, n_v, n_walkers):
    pairs = list(itertools.product(range(n_u), range(n_v)))
    return pairs, list(itertools.product(range(len(pairs)), repeat=n_walkers))


def exact_interacting_stage_matrix(log_table, u_kernel_matrix, n_walkers):
    """Enumerated matrix of one interacting u-step on (X1 x X2)^N.

    Ensemble states are tuples of indices into ``itertools.product(X1, X2)``.
    """
    log_table = np.asarray(log_table, dtype=float)
    n_u, n_v = log_table.shape
    pairs, states = _product_states(n_u, n_v, n_walkers)
    if len(states) > MAX_ENUMERATED_STATES:
        raise TooLarge("too many ensemble states")
    pair_index = {pq: k for k, pq in enumerate(pairs)}
    index = {st: k for k, st in enumerate(states)}
    target = TabulatedTarget(log_table)
    kernel = TabulatedKernel(u_kernel_matrix)
    qm = kernel.matrix
    p = np.zeros((len(states), len(states)))
    for col, st in enumerate(states):
        uv = [pairs[k] for k in st]
        ens = SplitEnsemble([[u] for u, _ in uv], [[v] for _, v in uv], target, kernel,
                            rebuild_every=0)
        prop_z = qm[:, [u for u, _ in uv]].mean(axis=1)
        for z in range(n_u):
            if prop_z[z] == 0:
                continue
            zvec = np.array([float(z)])
            w = subset_weights(ens, zvec, target, kernel).weights
            for i in range(n_walkers):
                if w[i] == 0:
                    continue
                a = subset_acceptance_probability(ens, i, zvec, target, kernel)
                mass = prop_z[z] * w[i]
                new = list(st)
                new[i] = pair_index[(z, uv[i][1])]
                p[index[tuple(new)], col] += mass * a
                p[col, col] += mass * (1 - a)
    return p


def exact_sweep_stage_matrix(log_table, v_kernel_matrix, n_walkers, n_inner):
    """Enumerated matrix of an independent v-sweep with ``n_inner`` MH steps."""
    log_table = np.asarray(log_table, dtype=float)
    n_u, n_v = log_table.shape
    r = np.asarray(v_kernel_matrix, dtype=float)
    pairs, states = _product_states(n_u, n_v, n_walkers)
    # single-walker kernel on X1 x X2: u fixed, Metropolized r on v
    single = np.zeros((len(pairs), len(pairs)))
    for u in range(n_u):
        cond = np.exp(log_table[u] - log_table[u].max())
        mv = np.linalg.matrix_power(metropolize(r, cond / cond.sum()), n_inner)
        for v_from in range(n_v):
            for v_to in range(n_v):
                single[u * n_v + v_to, u * n_v + v_from] = mv[v_to, v_from]
    p = np.ones((1, 1))
    for _ in range(n_walkers):
        p = np.kron(p, single)
    return p


# --- Jacobian of the mean-field dynamics --------------------------------------

@dataclass
class JacobianMatrix:
    matrix: np.ndarray
    pi: np.ndarray
    q_pi: np.ndarray

    def constraint_basis(self):
        return hyperplane_basis(np.ones(self.matrix.shape[0]))


def hyperplane_basis(normal):
    """Orthonormal basis (columns) of {f : normal . f = 0}.

    Built from the Householder reflection taking e_1 to the unit normal;
    its remaining columns span the complement.
    """
    a = np.asarray(normal, dtype=float)
    a = a / np.linalg.norm(a)
    e1 = np.zeros_like(a)
    e1[0] = 1.0
    v = a - e1 if a[0] <= 0 else a + e1
    v /= np.linalg.norm(v)
    h = np.eye(a.shape[0]) - 2.0 * np.outer(v, v)
    return h[:, 1:]


def jacobian(instance):
    """Linearization of the mean-field dynamics at rho = pi.

    J = Qpi (Qpi/pi)^T - diag(Qpi/pi) + Qpi 1^T; the last term vanishes
    on the zero-mass subspace.
    """
    pi, q = instance.pi, instance.q
    q_pi = q @ pi
    r = q_pi / pi
    j = np.outer(q_pi, r) - np.diag(r) + np.outer(q_pi, np.ones_like(pi))
    jm = JacobianMatrix(j, pi, q_pi)
    basis = jm.constraint_basis()
    # the rank-one 1^T term annihilates S0
    assert np.max(np.abs(np.outer(q_pi, np.ones_like(pi)) @ basis)) < 1e-12
    return jm


def jacobian_spectrum_check(instance, tol=1e-10):
    """Eigenvalues of the Jacobian on the zero-mass subspace.

    Eigenvalues come from the symmetrized operator
    M = D^{-1} J D, D = diag(sqrt(pi)), restricted to
    {f : sum f sqrt(pi) = 0}.  The imaginary-part check uses a general
    eigensolver on J restricted to {eta : sum eta = 0}.
    """
    if not instance.full_support:
        raise ValueError("kernel must have strictly positive entries")
    jm = jacobian(instance)
    pi, q_pi = jm.pi, jm.q_pi
    sq = np.sqrt(pi)
    g = q_pi / sq
    m = np.outer(g, g) - np.diag(q_pi / pi)
    b = hyperplane_basis(sq)
    eig = np.linalg.eigvalsh(b.T @ m @ b)
    bj = jm.constraint_basis()
    general = np.linalg.eigvals(bj.T @ jm.matrix @ bj)
    max_imag = float(np.max(np.abs(general.imag))) if general.size else 0.0
    top = float(eig.max())
    alpha = -1.0 / top if top < 0 else np.inf
    bound = float(np.max(pi / q_pi))
    ok = max_imag < tol and bool(np.all(eig < 0)) and alpha <= bound + tol
    return {
        "eigenvalues": eig.tolist(),
        "general_eigenvalues": np.sort(general.real).tolist(),
        "max_imag": max_imag,
        "max_eigenvalue": top,
        "alpha": alpha,
        "bound": bound,
        "pass": bool(ok),
    }


def _variance(f, weight):
    mean = float(np.sum(weight * f))
    return float(np.sum(weight * (f - mean) ** 2))


def variance_ratio_bound_check(instance, rho, tol=1e-12):
    """Check Var_rho(pi/rho) / Var_{Q rho}(pi/rho) <= max(rho / Q rho)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho must be strictly positive")
    rho = rho / rho.sum()
    pi, q = instance.pi, instance.q
    q_rho = q @ rho
    f = pi / rho
    var_rho = _variance(f, rho)
    var_q = _variance(f, q_rho)
    rhs = float(np.max(rho / q_rho))
    # rho == pi up to rounding: pi/rho is constant and both variances vanish
    scale = float(np.mean(f)) ** 2
    degenerate = var_q <= 1e-26 * scale and var_rho <= 1e-26 * scale
    if degenerate:
        lhs = 0.0
        ok = True
    else:
        lhs = var_rho / var_q if var_q > 0 else np.inf
        ok = lhs <= rhs + tol
    return {
        "lhs": lhs,
        "rhs": rhs,
        "var_rho": var_rho,
        "var_q_rho": var_q,
        "degenerate": bool(degenerate),
        "pass": bool(ok),
    }


# --- finite-state chi^2 decay -------------------------------------------------

def finite_chi2_decay(instance, rho0=None, dt=0.01, t_max=400.0, floor=1e-13):
    """Integrate the nonlinear dynamics on a finite space and fit the chi^2 rate.

    Runs forward Euler (``dx = 1``) until chi^2(pi || rho_t) falls below
    ``floor`` times its initial value or ``t_max`` is reached, then fits
    the tail window of ``fit_decay_rate``.

    Returns
    -------
    dict
        ``rate``, ``bound_rate`` = 2 / max(pi / Q pi), fit diagnostics and
        the integration end time.
    """
    from .meanfield import GridKernel, chi2_divergence, fit_decay_rate, nonlinear_rhs

    pi, q = instance.pi, instance.q
    rho = np.full_like(pi, 1.0 / pi.shape[0]) if rho0 is None else np.asarray(rho0, float)
    kernel = GridKernel(q, 1.0)
    c0 = chi2_divergence(pi, rho)
    times, values = [0.0], [c0]
    k = 0
    while k * dt < t_max and values[-1] > floor * c0:
        rho = rho + dt * nonlinear_rhs(rho, pi, kernel)
        k += 1
        times.append(k * dt)
        values.append(chi2_divergence(pi, rho))
    rate, _, diag = fit_decay_rate(times, values)
    return {"rate": rate, "bound_rate": 2.0 / float(np.max(pi / (q @ pi))),
            "t_end": k * dt, **diag}


# --- bundled verification sweep ------------------------------------------------

def verification_suite(rng, n_instances=50, max_states=3, max_walkers=2, tol=1e-10):
    """Random finite instances through every exact check.

    Returns a JSON-ready dict with one entry per check family and an
    overall ``pass``.
    """
    from .core import full_mh_ratio_oracle

    stationarity, spectral, metro_spectral, bound, oracle, perfect = [], [], [], [], [], []
    for _ in range(n_instances):
        s = int(rng.integers(2, max_states + 1))
        n = int(rng.integers(1, max_walkers + 1))
        inst = random_instance(rng, s)
        p = exact_ensemble_transition_matrix(inst, n)
        big_pi = product_distribution(inst.pi, n)
        stationarity.append(float(np.max(np.abs(p @ big_pi - big_pi))))

        report = jacobian_spectrum_check(inst, tol)
        report.update(instance_index=len(spectral), n_states=s)
        spectral.append(report)
        metro = jacobian_spectrum_check(random_instance(rng, s, metropolized=True), tol)
        metro_spectral.append(float(np.max(np.abs(np.asarray(metro["eigenvalues"]) + 1.0))))

        rho = rng.dirichlet(np.ones(s))
        rho = np.maximum(rho, 1e-3)
        bound.append(variance_ratio_bound_check(inst, rho / rho.sum()))

        # one random teleport proposal checked against the full MH ratio
        target, kernel = inst.target(), inst.kernel()
        n_o = max(n, 2)
        x = rng.integers(0, s, size=n_o).astype(float)[:, None]
        ens = WalkerEnsemble(x, target, kernel, rebuild_every=0)
        z = np.array([float(rng.integers(s))])
        i = int(rng.integers(n_o))
        xp = x.copy()
        xp[i] = z
        a = acceptance_probability(ens, i, z, target, kernel)
        ref = min(1.0, full_mh_ratio_oracle(ens, xp, target, kernel))
        oracle.append(abs(a - ref) / max(abs(ref), 1e-300))

        perf = FiniteInstance(inst.pi, np.repeat(inst.pi[:, None], s, axis=1))
        pt, pk = perf.target(), perf.kernel()
        pens = WalkerEnsemble(x, pt, pk, rebuild_every=0)
        w = importance_weights(pens, z, pt, pk).weights
        accs = [acceptance_probability(pens, k, z, pt, pk) for k in range(n_o)]
        perfect.append(float(max(np.max(np.abs(w - 1.0 / n_o)), max(abs(1 - a) for a in accs))))

    out = {
        "n_instances": n_instances,
        "stationarity": {"max_error": max(stationarity), "pass": max(stationarity) < 1e-12},
        "jacobian_spectrum": {
            "max_imag": max(r["max_imag"] for r in spectral),
            "max_eigenvalue": max(r["max_eigenvalue"] for r in spectral),
            "pass": all(r["pass"] for r in spectral),
        },
        "metropolized_spectrum": {"max_deviation_from_minus_one": max(metro_spectral),
                                  "pass": max(metro_spectral) < tol},
        "variance_ratio_bound": {
            "max_excess": max(r["lhs"] - r["rhs"] for r in bound),
            "pass": all(r["pass"] for r in bound),
        },
        "mh_ratio_oracle": {"max_relative_error": max(oracle), "pass": max(oracle) < tol},
        "perfect_proposal": {"max_deviation": max(perfect), "pass": max(perfect) < 1e-12},
    }
    out["pass"] = all(v["pass"] for v in out.values() if isinstance(v, dict))
    out["spectral_reports"] = [
        {k: r[k] for k in ("instance_index", "n_states", "eigenvalues", "alpha", "bound", "pass")}
        for r in spectral]
    return out
