"""Autocorrelation times and acceptance/teleport bookkeeping for sampler runs.

One step is one attempted walker move, so an ensemble of N walkers needs
N steps to give every walker a move on average.  IATs measured in steps
are divided by N to put ensembles of different sizes on the footing of
a single chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import WindowNotConverged

DEFAULT_WINDOW_CONSTANT = 5.0
DEFAULT_BURN_IN = 0.1
MIN_SERIES_LENGTH = 100


@dataclass
class RunRecord:
    """Per-step summaries and counters of one sampler run.

    ``ensemble_mean_series[k]`` is the ensemble average of the designated
    scalar after step k; ``cloned_walker_series[k]`` is that scalar at the
    walker cloned in step k, taken before the step.
    """

    n_walkers: int
    seed: int | None = None
    config: dict = field(default_factory=dict)
    ensemble_mean_series: list = field(default_factory=list)
    cloned_walker_series: list = field(default_factory=list)
    accepted_series: list = field(default_factory=list)
    teleported_series: list = field(default_factory=list)
    steps: int = 0
    acceptances: int = 0
    teleports_proposed: int = 0
    teleports_accepted: int = 0

    def append(self, ensemble_mean, cloned_value, accepted, teleported):
        self.ensemble_mean_series.append(float(ensemble_mean))
        self.cloned_walker_series.append(float(cloned_value))
        self.accepted_series.append(bool(accepted))
        self.teleported_series.append(bool(teleported))
        self.steps += 1
        self.acceptances += bool(accepted)
        self.teleports_proposed += bool(teleported)
        self.teleports_accepted += bool(accepted and teleported)

    def check(self):
        if not (self.teleports_accepted <= self.acceptances <= self.steps):
            raise ValueError("counter invariant violated: T_acc <= acc <= steps")
        if self.teleports_proposed > self.steps:
            raise ValueError("counter invariant violated: T_prop <= steps")


@dataclass
class IATResult:
    tau: float
    window: int
    normalized_tau: float


def autocorrelation(series):
    """Normalized autocorrelation c_k / c_0 of the mean-removed series (FFT)."""
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, n=nfft)
    acf = np.fft.irfft(f * np.conjugate(f), n=nfft)[:n]
    return acf / acf[0]


def integrated_autocorrelation_time(series, c=DEFAULT_WINDOW_CONSTANT, n_walkers=1):
    """Sokal-windowed integrated autocorrelation time.

    tau(W) = 1 + 2 sum_{k=1}^{W} rho_k, with W the smallest window
    satisfying W >= c tau(W).

    Parameters
    ----------
    series : array_like
        Scalar time series, at least 100 values, not constant.
    c : float
        Window constant.
    n_walkers : int
        Divisor for ``normalized_tau``.

    Raises
    ------
    WindowNotConverged
        If no window below half the series length satisfies the criterion.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.shape[0] < MIN_SERIES_LENGTH:
        raise ValueError(f"need a 1-D series of length >= {MIN_SERIES_LENGTH}")
    if np.all(x == x[0]):
        raise ValueError("series is constant")
    rho = autocorrelation(x)
    taus = 1.0 + 2.0 * np.cumsum(rho[1:])  # taus[W - 1] = tau(W)
    windows = np.arange(1, taus.shape[0] + 1)
    ok = (windows >= c * taus) & (windows < x.shape[0] / 2)
    if not np.any(ok):
        raise WindowNotConverged("no window W < n/2 with W >= c tau(W); chain too short")
    k = int(np.argmax(ok))
    tau = float(taus[k])
    return IATResult(tau, int(windows[k]), tau / n_walkers)


def discard_burn_in(series, fraction=DEFAULT_BURN_IN):
    if not 0 <= fraction < 1:
        raise ValueError("burn-in fraction must lie in [0, 1)")
    x = np.asarray(series)
    return x[int(math.floor(fraction * x.shape[0])):]


def _rate(count, steps):
    p = count / steps
    return p, math.sqrt(p * (1 - p) / steps)


def run_statistics(record, c=DEFAULT_WINDOW_CONSTANT, burn_in=DEFAULT_BURN_IN):
    """Acceptance and teleport rates plus the normalized IAT of the ensemble mean.

    Rates use every step; the IAT discards the leading ``burn_in``
    fraction.  The IAT entries are None when the window does not
    converge, with the reason under ``iat_error``.
    """
    if record.steps == 0:
        raise ValueError("empty run record")
    record.check()
    a, a_se = _rate(record.acceptances, record.steps)
    tp, tp_se = _rate(record.teleports_proposed, record.steps)
    ta, ta_se = _rate(record.teleports_accepted, record.steps)
    out = {
        "steps": record.steps,
        "n_walkers": record.n_walkers,
        "A": a,
        "A_se": a_se,
        "T_proposed": tp,
        "T_proposed_se": tp_se,
        "T_accepted": ta,
        "T_accepted_se": ta_se,
        "burn_in": burn_in,
        "window_constant": c,
        "tau": None,
        "normalized_tau": None,
        "window": None,
    }
    try:
        res = integrated_autocorrelation_time(
            discard_burn_in(record.ensemble_mean_series, burn_in), c, record.n_walkers)
    except (WindowNotConverged, ValueError) as exc:
        out["iat_error"] = str(exc)
    else:
        out.update(tau=res.tau, normalized_tau=res.normalized_tau, window=res.window)
    return out
