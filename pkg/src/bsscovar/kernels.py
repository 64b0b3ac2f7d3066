"""Kernels and the deterministic integrals built from them.

The built-in kernel is the Gamma kernel ``g(x) = x**delta * exp(-lam * x)``
for ``x > 0`` (zero elsewhere).  Its first and second differences are
evaluated in a cancellation-free form, which is what keeps the increment
correlations accurate at very fine grids (``n`` up to ``2**20``).
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import gamma as gamma_fn, gammaln, gammasgn

from .errors import DomainError
from .quadrature import QuadratureConfig, gamma_tail_bound, integrate_from_zero, tail_cutoff

__all__ = [
    "GammaKernel",
    "CustomKernel",
    "KernelPair",
    "QuadratureConfig",
    "eval_g",
    "tau_n",
    "rbar",
    "c_of_x",
    "c_of_x_alt",
    "h_ratio",
    "h_gamma",
    "h_gamma_directional",
    "variogram_limit",
]

LLN_RANGE = "δ ∈ (−1/2,1/2)\\{0}"
CLT_RANGE = "δ^(1), δ^(2) ∈ (−1/2, 1/4)\\{0}"


@dataclass(frozen=True)
class GammaKernel:
    """Gamma kernel ``x**delta * exp(-lam * x) * 1{x > 0}``.

    Parameters
    ----------
    delta : float
        Roughness exponent, must lie in (-1/2, 1/2) without 0.
    lam : float
        Exponential decay rate, > 0.
    """

    delta: float
    lam: float

    def __post_init__(self):
        d, lam = float(self.delta), float(self.lam)
        if not (-0.5 < d < 0.5) or d == 0.0:
            raise DomainError(f"delta={d!r} violates {LLN_RANGE}")
        if not lam > 0:
            raise DomainError(f"lambda={lam!r} must be > 0")
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "lam", lam)

    @property
    def clt_valid(self):
        return -0.5 < self.delta < 0.25

    @property
    def decay(self):
        return self.lam

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        xp = x[pos]
        out[pos] = xp**self.delta * np.exp(-self.lam * xp)
        return out

    def diff1(self, x, h):
        """``g(x + h) - g(x)`` for ``x >= 0``, ``h > 0``, without cancellation."""
        x = np.asarray(x, dtype=float)
        out = self(x + h)
        pos = x > 0
        xp = x[pos]
        out[pos] = self(xp) * np.expm1(self.delta * np.log1p(h / xp) - self.lam * h)
        return out

    def diff2(self, x, h):
        """``g(x + h) + g(x - h) - 2 g(x)`` for ``x >= h``.

        Where ``x >= 2h`` the centred difference is rewritten as
        ``2 g(x) (expm1(m) cosh(d) + 2 sinh(d/2)**2)`` with
        ``m = delta/2 * log1p(-(h/x)**2)`` and ``d = delta*atanh(h/x) - lam*h``,
        both of which are O(h/x) accurate quantities.
        """
        x = np.asarray(x, dtype=float)
        far = x >= 2 * h
        out = np.empty_like(x)
        xn = x[~far]
        out[~far] = self(xn + h) + self(xn - h) - 2.0 * self(xn)
        xf = x[far]
        r = h / xf
        m = 0.5 * self.delta * np.log1p(-r * r)
        d = self.delta * np.arctanh(r) - self.lam * h
        out[far] = 2.0 * self(xf) * (np.expm1(m) * np.cosh(d) + 2.0 * np.sinh(0.5 * d) ** 2)
        return out

    def sq_norm(self):
        """``||g||^2`` in closed form."""
        return self.inner(self)

    def inner(self, other):
        """``int_0^inf g * other``; closed form when ``other`` is a Gamma kernel."""
        if isinstance(other, GammaKernel):
            s = self.delta + other.delta
            mu = self.lam + other.lam
            return math.exp(gammaln(s + 1.0) - (s + 1.0) * math.log(mu))
        return _quad_inner(self, other)


@dataclass(frozen=True)
class CustomKernel:
    """User-supplied kernel; accepted as-is, not validated for the limit theory.

    ``func`` must be vectorised, vanish for ``x <= 0`` and behave like
    ``x**delta`` at the origin; ``decay`` is its exponential decay rate.
    ``sq_func`` optionally gives ``g**2`` directly (for better accuracy at
    the singularity).
    """

    func: object = field(compare=True)
    delta: float = 0.1
    decay: float = 1.0
    sq_func: object = None

    clt_valid = False

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, self.func(np.maximum(x, 1e-300)), 0.0)

    def diff1(self, x, h):
        x = np.asarray(x, dtype=float)
        return self(x + h) - self(x)

    def diff2(self, x, h):
        x = np.asarray(x, dtype=float)
        return self(x + h) + self(x - h) - 2.0 * self(x)

    def sq_norm(self):
        if self.sq_func is not None:
            return _quad_generic(lambda x: self.sq_func(x), 1.0, self.delta * 2, 2 * self.decay)
        return _quad_inner(self, self)

    def inner(self, other):
        return _quad_inner(self, other)


def _quad_generic(fun, scale, s, mu, q=QuadratureConfig()):
    upper = q.tail_cutoff or tail_cutoff(s, mu, q.abs_tol / 10)
    val, _ = integrate_from_zero(
        fun, scale, upper, q, wmax=2.0 / mu, tail=gamma_tail_bound(upper, s, mu)
    )
    return float(val)


def _quad_inner(k1, k2):
    return _quad_generic(
        lambda x: k1(x) * k2(x), 1.0, k1.delta + k2.delta, k1.decay + k2.decay
    )


@dataclass(frozen=True)
class KernelPair:
    """Two kernels and the correlation of their driving Brownian measures."""

    k1: object
    k2: object
    rho: float

    def __post_init__(self):
        rho = float(self.rho)
        if not -1.0 <= rho <= 1.0:
            raise DomainError(f"rho={rho!r} must lie in [-1, 1]")
        object.__setattr__(self, "rho", rho)

    def kernel(self, i):
        if i == 1:
            return self.k1
        if i == 2:
            return self.k2
        raise DomainError(f"component index must be 1 or 2, got {i!r}")

    def rho_ij(self, i, j):
        self.kernel(i), self.kernel(j)
        return 1.0 if i == j else self.rho

    @property
    def clt_valid(self):
        return bool(self.k1.clt_valid and self.k2.clt_valid)

    @property
    def deltas(self):
        return self.k1.delta, self.k2.delta

    def swap(self):
        return KernelPair(self.k2, self.k1, self.rho)


def eval_g(k, x):
    """Evaluate kernel ``k`` at ``x``; zero for ``x <= 0``."""
    out = k(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _upper(q, s, mu, coeff, magnitude=None):
    mag = 1.0 if magnitude is None else float(np.max(np.abs(magnitude)))
    if q.tail_cutoff is not None:
        T = q.tail_cutoff
    else:
        T = tail_cutoff(s, mu, q.abs_tol / (10 * coeff * mag))
    return T, coeff * gamma_tail_bound(T, s, mu)


def _prod_integral(ka, kb, f, scale, q, coeff, magnitude=None):
    """Shared driver: integrand ``f`` is bounded by ``coeff * g_a g_b`` in the tail."""
    s = ka.delta + kb.delta
    mu = ka.decay + kb.decay
    upper, tail = _upper(q, s, mu, coeff, magnitude)
    return integrate_from_zero(
        f, scale, upper, q, wmax=2.0 / mu, tail=tail, magnitude=magnitude
    )


def tau_sq(k, h, q=QuadratureConfig()):
    """Variance of one increment of mesh ``h`` of the univariate core."""

    def f(s):
        out = k.diff1(s, h) ** 2
        head = s < h
        out[head] += k(s[head]) ** 2
        return out

    val, err = _prod_integral(k, k, f, h, q, 4.0, magnitude=1.0)
    return float(val), float(err)


def tau_n(k, n, q=QuadratureConfig()):
    """Scaling factor: standard deviation of an increment over ``1/n``.

    Raises
    ------
    QuadratureError
        If the quadrature cannot meet the tolerances in ``q``.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    val, _ = tau_sq(k, 1.0 / n, q)
    return math.sqrt(val)


def rbar(p, i, j, t, q=QuadratureConfig(), return_error=False):
    """Cross-variogram ``E[(G^(j)_t - G^(i)_0)**2]``.

    Computed as ``C_ij - 2 rho_ij int g_i(y) (g_j(y+t) - g_j(y)) dy`` with
    the constant ``C_ij = ||g_i||^2 + ||g_j||^2 - 2 rho_ij <g_i, g_j>``.
    """
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t!r}")
    ki, kj = p.kernel(i), p.kernel(j)
    rij = p.rho_ij(i, j)
    const = 0.0 if i == j else ki.sq_norm() + kj.sq_norm() - 2.0 * rij * ki.inner(kj)
    if t == 0:
        return (const, 0.0) if return_error else const
    val, err = _prod_integral(ki, kj, lambda y: ki(y) * kj.diff1(y, t), t, q, 2.0)
    out = const - 2.0 * rij * float(val)
    if return_error:
        return out, 2.0 * abs(rij) * float(err)
    return out


def c_of_x(p, x, q=QuadratureConfig(), return_error=False):
    """``c(x) = int_0^x g1 g2 + int_0^inf (g1(s+x)-g1(s)) (g2(s+x)-g2(s)) ds``."""
    if not x > 0:
        raise DomainError(f"x must be > 0, got {x!r}")
    k1, k2 = p.k1, p.k2

    def f(s):
        out = k1.diff1(s, x) * k2.diff1(s, x)
        head = s < x
        out[head] += k1(s[head]) * k2(s[head])
        return out

    val, err = _prod_integral(k1, k2, f, x, q, 4.0)
    return (float(val), float(err)) if return_error else float(val)


def c_of_x_alt(p, x, q=QuadratureConfig()):
    """Same quantity via ``-int g1 (g2(.+x) - g2) - int g2 (g1(.+x) - g1)``.

    Used as an independent consistency check of :func:`c_of_x`.
    """
    if not x > 0:
        raise DomainError(f"x must be > 0, got {x!r}")
    k1, k2 = p.k1, p.k2
    v12, _ = _prod_integral(k1, k2, lambda y: k1(y) * k2.diff1(y, x), x, q, 2.0)
    v21, _ = _prod_integral(k1, k2, lambda y: k2(y) * k1.diff1(y, x), x, q, 2.0)
    return -float(v12) - float(v21)


def h_ratio(p, x, q=QuadratureConfig()):
    """``c(x) / sqrt(Rbar^{11}(x) Rbar^{22}(x))``, which tends to H as x -> 0."""
    return c_of_x(p, x, q) / math.sqrt(rbar(p, 1, 1, x, q) * rbar(p, 2, 2, x, q))


def _check_gamma_pair(p):
    for k in (p.k1, p.k2):
        if not isinstance(k, GammaKernel):
            raise DomainError("closed-form H is only available for Gamma kernels")
    s = p.k1.delta + p.k2.delta
    if s == 0.0:
        raise DomainError(
            "delta1 + delta2 = 0 puts Gamma(-1-delta1-delta2) on its pole at 0; "
            "H is not available in closed form"
        )
    if s == -1.0:
        raise DomainError(
            "delta1 + delta2 = -1 puts Gamma(delta1+delta2+1) on its pole; H undefined"
        )
    return s


def _log_term(a, b, s):
    """Sign and log-modulus of ``Gamma(a+1) Gamma(-1-s) / Gamma(-b)``."""
    sign = gammasgn(a + 1.0) * gammasgn(-1.0 - s) * gammasgn(-b)
    logm = gammaln(a + 1.0) + gammaln(-1.0 - s) - gammaln(-b)
    return sign, logm


def variogram_limit(a, b):
    """Coefficient of ``rho_ij t**(a+b+1)`` in the small-``t`` expansion of ``Rbar^{ij}``.

    ``a`` is the exponent of the kernel at time 0, ``b`` the one at time t:
    ``-2 Gamma(a+1) Gamma(-1-a-b) / Gamma(-b)``.  For ``a + b < 0`` it is the
    limit of ``(Rbar^{ij}(t) - C_ij) / (rho_ij t**(a+b+1))``; for ``a + b > 0``
    a term linear in ``t`` comes first and only second differences of the
    variogram isolate this coefficient.
    """
    sign, logm = _log_term(a, b, a + b)
    return -2.0 * sign * math.exp(logm)


def h_gamma_directional(p, i, j):
    """Directional small-lag constant ``H^{(i,j)}`` for Gamma kernels.

    Ratio of the ``t**(delta_i+delta_j+1)`` coefficient of ``Rbar^{ij}`` to
    ``sqrt`` of the product of the diagonal ones; it scales the limit of
    ``r_n(i, j, k)`` for ``k >= 1`` and is 1 for ``i == j``.  For ``i != j`` the two directions differ unless
    the exponents coincide; their average is :func:`h_gamma`.
    """
    _check_gamma_pair(p)
    if i == j:
        return 1.0
    a, b = p.kernel(i).delta, p.kernel(j).delta
    s = a + b
    si, li = _log_term(a, b, s)
    s1, l1 = _log_term(a, a, 2 * a)
    s2, l2 = _log_term(b, b, 2 * b)
    # terms for (a, a) and (b, b) are negative, so their product is positive
    return -si * math.exp(li - 0.5 * (l1 + l2))


def h_gamma(p):
    """Closed-form constant H for a pair of Gamma kernels (independent of lambda).

    ``H = -(T12 + T21) / (2 sqrt(T11 T22))`` with
    ``Tij = Gamma(delta_i + 1) Gamma(-1 - delta_1 - delta_2) / Gamma(-delta_j)``,
    where ``Tii`` uses ``delta_1 + delta_2 -> 2 delta_i``.  Evaluated from
    log-gamma values with explicit sign tracking.

    Raises
    ------
    DomainError
        For non-Gamma kernels or on the gamma-function poles
        ``delta1 + delta2 in {0, -1}``.
    """
    _check_gamma_pair(p)
    return 0.5 * (h_gamma_directional(p, 1, 2) + h_gamma_directional(p, 2, 1))


def h_gamma_trig(d1, d2):
    """Reflection-formula form of H, used to cross-check :func:`h_gamma`.

    ``cos(pi(d1-d2)/2) sqrt(G(2d1+2) G(2d2+2) cos(pi d1) cos(pi d2))
    / (G(d1+d2+2) cos(pi(d1+d2)/2))``.
    """
    num = math.cos(math.pi * (d1 - d2) / 2) * math.sqrt(
        gamma_fn(2 * d1 + 2) * gamma_fn(2 * d2 + 2) * math.cos(math.pi * d1) * math.cos(math.pi * d2)
    )
    return num / (gamma_fn(d1 + d2 + 2) * math.cos(math.pi * (d1 + d2) / 2))
