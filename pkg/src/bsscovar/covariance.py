"""Correlations of scaled Gaussian-core increments and their joint covariance."""

from dataclasses import dataclass
import csv
import math

import numpy as np
from scipy.linalg import toeplitz

from ._cache import CACHE
from .errors import DomainError, MatrixSizeError
from .kernels import KernelPair, QuadratureConfig, _prod_integral, c_of_x, tau_sq

__all__ = [
    "IncrementCovariance",
    "r_n",
    "r_n_lags",
    "flip_lag",
    "level_cross",
    "build_increment_cov",
    "clear_cache",
    "MAX_DIM",
]

# largest matrix dimension a single covariance may have (~540 MB as float64)
MAX_DIM = 8200


def _check_n(n):
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    return int(n)


def taus(p, n, q=QuadratureConfig()):
    """Scaling factors of both components at frequency ``n``."""
    h = 1.0 / _check_n(n)
    return math.sqrt(tau_sq(p.k1, h, q)[0]), math.sqrt(tau_sq(p.k2, h, q)[0])


def r_n_lags(p, n, a, b, ks, q=QuadratureConfig(), tau=None):
    """Vectorised :func:`r_n` over an array of nonnegative lags ``ks``.

    For ``k >= 1`` the correlation is
    ``-rho_ab int g_a(y) D2_b(y + k/n) dy / (tau_a tau_b)`` with the centred
    second difference ``D2_b(x) = g_b(x + 1/n) + g_b(x - 1/n) - 2 g_b(x)``,
    i.e. the second difference of the variogram taken inside the integral
    so that the constant parts cancel exactly.
    """
    n = _check_n(n)
    ks = np.atleast_1d(np.asarray(ks))
    if ks.size and ks.min() < 0:
        raise DomainError("r_n needs k >= 0; use flip_lag for negative lags")
    ka, kb = p.kernel(a), p.kernel(b)
    rab = p.rho_ij(a, b)
    h = 1.0 / n
    if tau is None:
        ta, tb = taus(p, n, q)
        tau = {1: ta, 2: tb}
    ta, tb = tau[a], tau[b]
    out = np.zeros(ks.shape, dtype=float)
    zero = ks == 0
    if np.any(zero):
        if a == b:
            out[zero] = 1.0
        elif rab != 0.0:
            out[zero] = rab * c_of_x(p, h, q) / (ta * tb)
    pos = ~zero
    if np.any(pos) and rab != 0.0:
        kp = ks[pos]
        shift = kp.astype(float)[:, None] * h
        one = kp == 1

        def f(y):
            out = ka(y)[None, :] * kb.diff2(y[None, :] + shift, h)
            if np.any(one):
                # at lag 1 the term g_b(y) must not be evaluated as g_b((y + h) - h),
                # which loses y near the origin
                near = y < h
                yn = y[near]
                d2 = kb(yn + 2 * h) - 2.0 * kb(yn + h) + kb(yn)
                out[np.ix_(one, near)] = ka(yn) * d2
            return out

        mag = abs(rab) / (ta * tb)
        val, _ = _prod_integral(ka, kb, f, h, q, 4.0, magnitude=mag)
        out[pos] = -rab * val / (ta * tb)
    return out


def r_n(p, n, a, b, k, q=QuadratureConfig()):
    """Exact correlation of ``Delta_1 G^(a) / tau_a`` and ``Delta_{1+k} G^(b) / tau_b``.

    Parameters
    ----------
    p : KernelPair
    n : int
        Sampling frequency, the mesh is ``1/n``.
    a, b : {1, 2}
        Components.
    k : int
        Lag, ``k >= 0``.
    q : QuadratureConfig
    """
    if int(k) != k or k < 0:
        raise DomainError(f"r_n needs an integer k >= 0, got {k!r}; use flip_lag")
    if a == b and k == 0:
        p.kernel(a)
        return 1.0
    return float(r_n_lags(p, n, a, b, [int(k)], q)[0])


def flip_lag(p, n, a, b, k, q=QuadratureConfig()):
    """Correlation at a negative lag through ``r_ab(-k) = r_ba(k)``."""
    if not k < 0:
        raise DomainError(f"flip_lag needs k < 0, got {k!r}")
    return r_n(p, n, b, a, -k, q)


def level_cross(p, n, a, b, N, q=QuadratureConfig(), tau_b=None):
    """``Cov(G^(a)_0, Delta_i G^(b) / tau_b)`` for ``i = 1..N``."""
    n = _check_n(n)
    ka, kb = p.kernel(a), p.kernel(b)
    rab = p.rho_ij(a, b)
    h = 1.0 / n
    if tau_b is None:
        tau_b = math.sqrt(tau_sq(kb, h, q)[0])
    if rab == 0.0:
        return np.zeros(N)
    shift = np.arange(N, dtype=float)[:, None] * h
    f = lambda y: ka(y)[None, :] * kb.diff1(y[None, :] + shift, h)
    val, _ = _prod_integral(ka, kb, f, h, q, 2.0, magnitude=abs(rab) / tau_b)
    return rab * val / tau_b


@dataclass(frozen=True, eq=False)
class IncrementCovariance:
    """Covariance of ``(dG1_1..dG1_N, dG2_1..dG2_N)`` scaled by the ``tau``'s.

    With ``with_levels`` two more coordinates ``G^(1)_0, G^(2)_0`` (unscaled)
    are appended, which lets a sampler reconstruct the level of the core.
    """

    n: int
    N: int
    matrix: np.ndarray
    tau: tuple
    with_levels: bool = False

    @property
    def dim(self):
        return self.matrix.shape[0]

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def to_csv(self, path, header=()):
        """Write the matrix as CSV (17 significant digits)."""
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            for row in self.matrix:
                w.writerow([f"{v:.17g}" for v in row])


def clear_cache():
    CACHE.clear()


def _assemble(p, n, N, q, with_levels):
    ta, tb = taus(p, n, q)
    tau = {1: ta, 2: tb}
    ks = np.arange(N)
    r11 = r_n_lags(p, n, 1, 1, ks, q, tau)
    r22 = r_n_lags(p, n, 2, 2, ks, q, tau)
    r12 = r_n_lags(p, n, 1, 2, ks, q, tau)
    r21 = r_n_lags(p, n, 2, 1, ks, q, tau)
    dim = 2 * N + (2 if with_levels else 0)
    m = np.empty((dim, dim))
    m[:N, :N] = toeplitz(r11)
    m[N : 2 * N, N : 2 * N] = toeplitz(r22)
    # cross block [i, j] = Cov(dG1_i, dG2_j): r12(j - i) above, r21(i - j) below
    m[:N, N : 2 * N] = toeplitz(r21, r12)
    m[N : 2 * N, :N] = m[:N, N : 2 * N].T
    if with_levels:
        lv = np.zeros((2, 2 * N))
        lv[0, :N] = level_cross(p, n, 1, 1, N, q, ta)
        lv[0, N:] = level_cross(p, n, 1, 2, N, q, tb)
        lv[1, :N] = level_cross(p, n, 2, 1, N, q, ta)
        lv[1, N:] = level_cross(p, n, 2, 2, N, q, tb)
        cross = p.rho * p.k1.inner(p.k2)
        m[2 * N :, : 2 * N] = lv
        m[: 2 * N, 2 * N :] = lv.T
        m[2 * N :, 2 * N :] = [[p.k1.sq_norm(), cross], [cross, p.k2.sq_norm()]]
    m.setflags(write=False)
    return IncrementCovariance(n, N, m, (ta, tb), with_levels)


def build_increment_cov(p, n, N, q=QuadratureConfig(), with_levels=False, max_dim=MAX_DIM):
    """Joint covariance of the first ``N`` scaled increments of both components.

    Results are cached per ``(p, n, N, q, with_levels)``; the returned matrix
    is read-only and exactly symmetric.

    Raises
    ------
    MatrixSizeError
        If the matrix dimension would exceed ``max_dim``.
    """
    if not isinstance(p, KernelPair):
        raise DomainError("p must be a KernelPair")
    n = _check_n(n)
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    dim = 2 * N + (2 if with_levels else 0)
    if dim > max_dim:
        raise MatrixSizeError(
            f"covariance of dimension {dim} exceeds the cap {max_dim}; reduce n*T"
        )
    key = ("cov", p, n, N, q, bool(with_levels))
    return CACHE.get_or_build(key, lambda: _assemble(p, n, N, q, with_levels))
