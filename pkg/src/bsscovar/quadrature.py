"""Vectorised quadrature for integrands with an algebraic singularity at 0.

Every kernel integral in the toolkit has the form ``int_0^inf f(x) dx`` where
``f`` behaves like ``x**beta`` (``beta > -1``) near the origin, is smooth on
``(0, inf)`` with a local length scale that grows with ``x``, and decays
exponentially.  The mesh reflects that:

* ``[0, scale]`` is handled by tanh-sinh quadrature, which tolerates the
  endpoint singularity at full double-exponential speed;
* ``[scale, upper]`` is cut into cells whose widths double (graded mesh,
  spacing proportional to ``x``) until they reach ``wmax``, each carrying a
  Gauss-Legendre rule.

Refinement bisects every cell and halves the tanh-sinh step; the difference
between two successive levels is the reported error estimate.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.special import expit

from .errors import DomainError, QuadratureError

__all__ = [
    "QuadratureConfig",
    "integrate_from_zero",
    "gamma_tail_bound",
    "tail_cutoff",
]


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances and limits for the adaptive kernel quadrature.

    Parameters
    ----------
    abs_tol, rel_tol : float
        Absolute and relative tolerance on the returned quantity.
    max_subdivisions : int
        Largest number of Gauss-Legendre cells a single integral may use.
    tail_cutoff : float or None
        Upper integration limit.  ``None`` picks it per integrand so the
        analytic tail bound stays below ``abs_tol / 10``.
    """

    abs_tol: float = 1e-13
    rel_tol: float = 1e-10
    max_subdivisions: int = 8192
    tail_cutoff: float | None = None

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be > 0")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")
        if self.tail_cutoff is not None and not self.tail_cutoff > 0:
            raise DomainError("tail_cutoff must be > 0")

    def halved(self):
        """Same configuration with both tolerances halved."""
        return QuadratureConfig(
            self.abs_tol / 2, self.rel_tol / 2, self.max_subdivisions, self.tail_cutoff
        )


# nodes below exp(-pi*sinh(5.6)) ~ 1e-184 are dropped; beyond that the
# weights underflow anyway
_TS_TMAX = 5.6


@lru_cache(maxsize=16)
def _tanh_sinh(level):
    h = 2.0**-level
    m = math.ceil(_TS_TMAX / h)
    tau = h * np.arange(-m, m + 1)
    s = np.pi * np.sinh(tau)
    t = expit(s)
    w = h * np.pi * np.cosh(tau) * expit(s) * expit(-s)
    keep = w > 0
    return t[keep], w[keep]


@lru_cache(maxsize=8)
def _gauss_legendre(p):
    x, w = np.polynomial.legendre.leggauss(p)
    return (x + 1.0) / 2.0, w / 2.0


def _cells(scale, upper, wmax, refine):
    edges = [scale]
    while edges[-1] < upper:
        edges.append(edges[-1] + min(edges[-1], wmax))
    edges[-1] = upper
    e = np.asarray(edges)
    a, b = e[:-1], e[1:]
    if refine:
        k = 2**refine
        frac = np.arange(k + 1) / k
        sub = a[:, None] + (b - a)[:, None] * frac[None, :]
        a, b = sub[:, :-1].ravel(), sub[:, 1:].ravel()
    return a, b


def _rule(scale, upper, wmax, refine, gl_points, ts_level):
    t, wt = _tanh_sinh(ts_level + refine)
    head = min(scale, upper)
    xs, ws = [head * t], [head * wt]
    ncell = 0
    if upper > scale:
        a, b = _cells(scale, upper, wmax, refine)
        ncell = a.size
        gx, gw = _gauss_legendre(gl_points)
        xs.append((a[:, None] + (b - a)[:, None] * gx[None, :]).ravel())
        ws.append(((b - a)[:, None] * gw[None, :]).ravel())
    return np.concatenate(xs), np.concatenate(ws), ncell


def integrate_from_zero(
    f,
    scale,
    upper,
    q,
    *,
    wmax=None,
    tail=0.0,
    magnitude=None,
    gl_points=16,
    ts_level=3,
    max_levels=6,
):
    """Integrate ``f`` over ``[0, upper]`` with refinement control.

    Parameters
    ----------
    f : callable
        Maps a 1-D array of nodes to an array of shape ``(..., nodes)``;
        leading dimensions are integrated independently (batched integrands).
    scale : float
        Width of the singular head cell.  Structure of ``f`` finer than
        ``scale`` may only occur at the origin.
    upper : float
        Truncation point of the integral.
    q : QuadratureConfig
    wmax : float, optional
        Largest permitted cell width; defaults to ``upper``.
    tail : float
        Analytic bound of ``int_upper^inf |f|``, added to the error estimate.
    magnitude : float or array, optional
        Factor converting the integral into the caller's units before the
        tolerances are applied (e.g. ``1 / (tau_a * tau_b)`` for
        correlations).

    Returns
    -------
    value, error : ndarray
        Integral and error estimate, shape ``f(x).shape[:-1]``.
    """
    if not (scale > 0 and upper > 0):
        raise DomainError("integration scale and upper limit must be > 0")
    wmax = upper if wmax is None else wmax
    mag = 1.0 if magnitude is None else np.abs(magnitude)
    prev = None
    err = np.inf
    for refine in range(max_levels):
        x, w, ncell = _rule(scale, upper, wmax, refine, gl_points, ts_level)
        if ncell > q.max_subdivisions:
            break
        val = np.asarray(f(x)) @ w
        if prev is not None:
            err = np.abs(val - prev) + tail
            tol = np.maximum(q.abs_tol / mag, q.rel_tol * np.abs(val))
            if np.all(err <= tol):
                return val, err
        prev = val
    worst = float(np.max(np.asarray(err) * mag)) if prev is not None else float("nan")
    raise QuadratureError("kernel quadrature did not converge", worst)


def gamma_tail_bound(T, s, mu):
    """Upper bound of ``int_T^inf x**s exp(-mu x) dx``."""
    if s <= 0:
        return T**s * math.exp(-mu * T) / mu
    if mu * T <= s:
        return math.inf
    return T**s * math.exp(-mu * T) / (mu - s / T)


def tail_cutoff(s, mu, target, floor=1.0):
    """Smallest ``T >= floor`` (to 1%) with ``gamma_tail_bound(T, s, mu) <= target``."""
    lo = max(floor, 2.0 * max(s, 0.0) / mu)
    if gamma_tail_bound(lo, s, mu) <= target:
        return lo
    hi = 2.0 * lo
    while gamma_tail_bound(hi, s, mu) > target:
        hi *= 2.0
    while hi - lo > 0.01 * hi:
        mid = 0.5 * (lo + hi)
        if gamma_tail_bound(mid, s, mu) > target:
            lo = mid
        else:
            hi = mid
    return hi
