"""Limiting increment correlations and the limiting variance ``beta = C(1,1)``."""

from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np
from scipy.special import zeta

from .covariance import r_n, r_n_lags, taus
from .errors import DomainError
from .kernels import CLT_RANGE, KernelPair, QuadratureConfig, h_gamma, h_gamma_directional

__all__ = [
    "LimitSpec",
    "C11Result",
    "rho_theta",
    "second_difference_power",
    "c11",
    "mu_n",
    "finite_n_variance",
]


@dataclass(frozen=True)
class LimitSpec:
    """Pair of Gamma kernels with the constants of their small-scale limit.

    ``H`` is the symmetric constant of :func:`bsscovar.kernels.h_gamma`;
    ``H12`` and ``H21`` are its directional versions, which enter the
    limits of ``r_12(k)`` and ``r_21(k)`` for ``k >= 1``.  They coincide with
    ``H`` when ``delta1 == delta2``.
    """

    pair: KernelPair
    H: float
    H12: float
    H21: float

    @classmethod
    def from_pair(cls, pair):
        return cls(
            pair,
            h_gamma(pair),
            h_gamma_directional(pair, 1, 2),
            h_gamma_directional(pair, 2, 1),
        )

    @property
    def theta_11(self):
        return 2 * self.pair.k1.delta + 1

    @property
    def theta_22(self):
        return 2 * self.pair.k2.delta + 1

    @property
    def theta_12(self):
        return self.pair.k1.delta + self.pair.k2.delta + 1

    def theta(self, i, j):
        return self.pair.kernel(i).delta + self.pair.kernel(j).delta + 1

    def h_dir(self, i, j):
        if i == j:
            return 1.0
        return self.H12 if (i, j) == (1, 2) else self.H21


# lags from which the second difference is summed as a series in 1/k**2
_SERIES_FROM = 4
_SERIES_TERMS = 16


def second_difference_power(theta, k):
    """``(k-1)**theta - 2 k**theta + (k+1)**theta`` for ``k >= 1``.

    For ``k >= 4`` the value comes from ``k**theta sum_m 2 C(theta, 2m) k**(-2m)``,
    which avoids the cancellation of the direct form (the truncation error
    is below ``4**-32`` relative).
    """
    k = np.asarray(k, dtype=float)
    out = np.empty(k.shape)
    small = k < _SERIES_FROM
    ks = k[small]
    out[small] = (ks - 1.0) ** theta - 2.0 * ks**theta + (ks + 1.0) ** theta
    kl = k[~small]
    if kl.size:
        u = kl**-2.0
        coef = _power_series(theta, _SERIES_TERMS)
        acc = np.zeros(kl.shape)
        for c in coef[::-1]:
            acc = (acc + c) * u
        out[~small] = kl**theta * acc
    return out if out.ndim else float(out)


def rho_theta(spec, i, j, k):
    """Limit of ``r_n(i, j, k)`` as ``n -> inf``; vectorised over ``k``."""
    k_arr = np.asarray(k)
    if np.any(k_arr < 0):
        raise DomainError("rho_theta needs k >= 0")
    rij = spec.pair.rho_ij(i, j)
    pos = np.where(k_arr >= 1, k_arr, 1)
    val = 0.5 * rij * spec.h_dir(i, j) * second_difference_power(spec.theta(i, j), pos)
    at0 = 1.0 if i == j else spec.pair.rho * spec.H
    out = np.where(k_arr == 0, at0, val)
    return float(out) if out.ndim == 0 else out


class C11Result(NamedTuple):
    beta: float
    K_used: int
    tail_bound: float


# largest number of terms summed directly
K_MAX = 10**6
# head length when the tail is summed analytically
K_HEAD = 1000
_EXPANSION_ORDER = 8


def _check_clt(pair):
    for d in pair.deltas:
        if not (-0.5 < d < 0.25) or d == 0.0:
            raise DomainError(f"delta={d!r} violates the CLT range {CLT_RANGE}")


def _power_series(theta, order):
    """Coefficients ``a_m`` with ``D_theta(k) = sum_m a_m k**(theta - 2m)``."""
    # binomial coefficients by the product recurrence, which is more
    # accurate than the gamma-function route for small arguments
    c = np.empty(2 * order + 1)
    c[0] = 1.0
    for j in range(2 * order):
        c[j + 1] = c[j] * (theta - j) / (j + 1)
    return 2.0 * c[2::2]


def _product_tail(ta, tb, K, order):
    """``sum_{k>K} D_ta(k) D_tb(k)`` from the convergent expansion in ``1/k``."""
    ca, cb = _power_series(ta, order), _power_series(tb, order)
    total = 0.0
    for m in range(order):
        for l in range(order - m):
            expo = 2 * (m + l + 2) - ta - tb
            total += ca[m] * cb[l] * zeta(expo, K + 1)
    # omitted orders: |binomial| <= 1, so each term is below 4 zeta(.) and
    # successive orders shrink by K**-2
    expo = 2 * (order + 2) - ta - tb
    omitted = 4.0 * (order + 1) * zeta(expo, K + 1) / (1.0 - K**-2.0) ** 2
    return total, omitted


def c11(spec, tol=1e-10, method="auto"):
    """Limiting variance ``beta`` of the centred, sqrt(n)-scaled realised covariation.

    ``beta = 1 + rho**2 H**2 + 2 sum_{k>=1} (rho11(k) rho22(k) + rho12(k) rho21(k))``.

    Parameters
    ----------
    spec : LimitSpec
    tol : float
        Target bound for the neglected part of the series.
    method : {"auto", "truncate", "expansion"}
        ``truncate`` sums ``K`` terms with ``K`` such that the comparison
        bound ``4 (K-1)**(2s-1) / (1-2s)`` (``s = delta1 + delta2``) is below
        ``tol``.  ``expansion`` sums ``K_HEAD`` terms and adds the rest of the
        series in closed form through Hurwitz zeta values, the reported bound
        then covers the truncated expansion.  ``auto`` truncates when that
        needs at most ``K_MAX`` terms.

    Returns
    -------
    C11Result
        ``(beta, K_used, tail_bound)``.
    """
    if not tol > 0:
        raise DomainError("tol must be > 0")
    _check_clt(spec.pair)
    s = spec.pair.k1.delta + spec.pair.k2.delta
    expo = 2 * s - 1
    K_trunc = 1 + math.ceil((tol * -expo / 4.0) ** (1.0 / expo))
    if method == "auto":
        method = "truncate" if K_trunc <= K_MAX else "expansion"
    if method == "truncate":
        K = max(K_trunc, 2)
    elif method == "expansion":
        K = K_HEAD
    else:
        raise DomainError(f"unknown method {method!r}")
    rho = spec.pair.rho
    t11, t22, t12 = spec.theta_11, spec.theta_22, spec.theta_12
    cross = rho * rho * spec.H12 * spec.H21
    k = np.arange(1, K + 1, dtype=float)
    terms = 0.25 * (
        second_difference_power(t11, k) * second_difference_power(t22, k)
        + cross * second_difference_power(t12, k) ** 2
    )
    head = math.fsum(terms)
    if method == "truncate":
        bound = 4.0 * (K - 1) ** expo / -expo
        tail = 0.0
    else:
        d1, e1 = _product_tail(t11, t22, K, _EXPANSION_ORDER)
        d2, e2 = _product_tail(t12, t12, K, _EXPANSION_ORDER)
        tail = 0.25 * (d1 + cross * d2)
        bound = 2 * 0.25 * (e1 + abs(cross) * e2)
    beta = 1.0 + rho * rho * spec.H**2 + 2.0 * (head + tail)
    return C11Result(float(beta), int(K), float(bound))


def mu_n(p, n, q=QuadratureConfig()):
    """Mean ``E[Delta G^(1) Delta G^(2)] / (tau_1 tau_2)`` of one scaled product."""
    return r_n(p, n, 1, 2, 0, q)


def finite_n_variance(p, n, t=1.0, q=QuadratureConfig()):
    """Exact variance of the core statistic at frequency ``n`` and time ``t``.

    By Isserlis' theorem
    ``Var = (N (1 + r12(0)**2) + 2 sum_{k<N} (N-k) (r11 r22 + r12 r21)(k)) / n``
    with ``N = floor(n t)``.
    """
    N = int(math.floor(n * t))
    if N < 1:
        return 0.0
    tau = dict(zip((1, 2), taus(p, n, q)))
    ks = np.arange(N)
    r11, r22, r12, r21 = (r_n_lags(p, n, a, b, ks, q, tau) for a, b in ((1, 1), (2, 2), (1, 2), (2, 1)))
    f = r11 * r22 + r12 * r21
    w = (N - ks).astype(float)
    w[1:] *= 2.0
    return math.fsum(w * f) / n
