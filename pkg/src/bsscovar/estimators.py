"""Realised covariation, the central-limit statistics and the LLN estimator.

All sums run in increment order with Neumaier compensation, vectorised
over paths, so one-pass and cumulative evaluations agree bitwise.
"""

from dataclasses import dataclass
import math

import numpy as np

from .asymptotics import mu_n
from .errors import BssError, DomainError
from .kernels import QuadratureConfig, c_of_x
from .covariance import taus

__all__ = [
    "CovariationSeries",
    "compensated_sum",
    "realised_covariation",
    "covariation_series",
    "clt_statistic_core",
    "clt_statistic_bss",
    "lln_estimator",
    "DegenerateScaleError",
]


class DegenerateScaleError(BssError, ArithmeticError):
    """``c(1/n)`` is not positive, so the LLN normalisation is undefined."""


def compensated_sum(terms, cumulative=False):
    """Neumaier sum of ``terms`` along the last axis, in index order.

    With ``cumulative`` the running sums are returned (same shape as
    ``terms``); the last running sum equals the plain result bitwise.
    """
    x = np.asarray(terms, dtype=float)
    s = np.zeros(x.shape[:-1])
    c = np.zeros(x.shape[:-1])
    out = np.empty(x.shape) if cumulative else None
    for i in range(x.shape[-1]):
        v = x[..., i]
        t = s + v
        c += np.where(np.abs(s) >= np.abs(v), (s - t) + v, (v - t) + s)
        s = t
        if cumulative:
            out[..., i] = s + c
    return out if cumulative else s + c


def _count(n, t, N):
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t!r}")
    m = int(math.floor(n * t + 1e-9))
    if m > N:
        raise DomainError(f"t={t!r} exceeds the horizon of {N} increments at n={n}")
    return m


def _pair(dx, dy):
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    if dx.shape != dy.shape:
        raise DomainError(f"increment arrays differ in shape: {dx.shape} vs {dy.shape}")
    return dx, dy


def realised_covariation(dx, dy, t=None, n=None):
    """``sum_{i <= floor(n t)} dx_i dy_i`` (all increments when ``t`` is None).

    ``dx`` and ``dy`` may be 2-D (paths by increments), the sum then runs
    along the last axis.
    """
    dx, dy = _pair(dx, dy)
    m = dx.shape[-1]
    if t is not None:
        if n is None:
            raise DomainError("n is required when t is given")
        m = _count(n, t, dx.shape[-1])
    return compensated_sum(dx[..., :m] * dy[..., :m])


@dataclass(frozen=True, eq=False)
class CovariationSeries:
    """Running realised covariation on the grid ``j / n``, ``j = 1..N``."""

    t_grid: np.ndarray
    values: np.ndarray
    n: int

    def at(self, t):
        j = _count(self.n, t, self.values.shape[-1])
        if j == 0:
            return np.zeros(self.values.shape[:-1])
        return self.values[..., j - 1]


def covariation_series(dx, dy, n):
    """Cumulative realised covariation of two increment arrays."""
    dx, dy = _pair(dx, dy)
    vals = compensated_sum(dx * dy, cumulative=True)
    return CovariationSeries(np.arange(1, dx.shape[-1] + 1) / n, vals, int(n))


def _panel_arrays(panel):
    if hasattr(panel, "dy1"):
        return panel.dy1, panel.dy2
    dx, dy = panel
    return _pair(dx, dy)


def clt_statistic_core(panel, p, n, t, q=QuadratureConfig(), mu=None):
    """``n**-0.5 sum_{i <= floor(n t)} (dG1_i dG2_i / (tau1 tau2) - mu_n)``.

    ``panel`` holds scaled core increments (a :class:`Panel` or a pair of
    arrays); ``mu`` overrides :func:`bsscovar.asymptotics.mu_n`.
    """
    x, y = _panel_arrays(panel)
    m = _count(n, t, x.shape[-1])
    if m == 0:
        return np.zeros(x.shape[:-1])
    mu = mu_n(p, n, q) if mu is None else mu
    return compensated_sum(x[..., :m] * y[..., :m] - mu) / math.sqrt(n)


def clt_statistic_bss(panel, p, vol, n, t, q=QuadratureConfig(), mu=None):
    """Centred statistic for raw BSS increments.

    ``n**-0.5 sum dY1 dY2 / (tau1 tau2) - sqrt(n) mu_n int_0^t sigma1 sigma2``
    with the volatility integral read from the panel (trapezoid on the
    simulation grid) or, for arrays, computed from ``vol``.
    """
    x, y = _panel_arrays(panel)
    m = _count(n, t, x.shape[-1])
    if m == 0:
        return np.zeros(x.shape[:-1])
    t1, t2 = taus(p, n, q)
    mu = mu_n(p, n, q) if mu is None else mu
    if hasattr(panel, "sigma_integral"):
        integral = panel.sigma_integral(t)
    else:
        integral = _vol_integral(vol, n, m)
    rc = compensated_sum(x[..., :m] * y[..., :m]) / (t1 * t2)
    return rc / math.sqrt(n) - math.sqrt(n) * mu * integral


def _vol_integral(vol, n, m, kappa=16):
    h = 1.0 / (n * kappa)
    s = vol.evaluate(h * np.arange(m * kappa + 1))
    f = s[0] * s[1]
    return float(np.sum(0.5 * h * (f[1:] + f[:-1])))


def lln_estimator(dy1, dy2, p, n, t, q=QuadratureConfig()):
    """``(1/n) / c(1/n) * RC_t``, consistent for ``rho int_0^t sigma1 sigma2``.

    Raises
    ------
    DegenerateScaleError
        If ``c(1/n) <= 0``.
    """
    c = c_of_x(p, 1.0 / n, q)
    if not c > 0:
        raise DegenerateScaleError(
            f"c(1/n) = {c:.3e} is not positive; the kernels cancel at this n"
        )
    return (1.0 / n) / c * realised_covariation(dy1, dy2, t, n)
