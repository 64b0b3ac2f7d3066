"""Sampling of Gaussian-core increment panels and bivariate BSS paths.

Three routes are available.

* Gaussian core: exact draws from the joint law of the scaled increments
  (dense factorisation of :func:`bsscovar.covariance.build_increment_cov`).
* BSS with constant or deterministic volatility: the increments are still
  jointly Gaussian, their covariance is assembled by quadrature and the
  panel is drawn exactly from it.
* BSS with core-driven volatility: a fine-grid moving average where the
  cell nearest to the evaluation time is integrated exactly against the
  power singularity and the volatility is frozen at left endpoints.
"""

from dataclasses import dataclass, field
import csv
import logging
import math
import warnings

import numpy as np
from scipy import sparse
from scipy.linalg import cholesky
from scipy.signal import fftconvolve

from ._cache import CACHE
from .covariance import MAX_DIM, build_increment_cov, taus
from .errors import DomainError, FactorizationError, MatrixSizeError
from .kernels import GammaKernel, KernelPair, QuadratureConfig, tail_cutoff
from .quadrature import _gauss_legendre, _tanh_sinh, gamma_tail_bound
from .rng import chunk_ranges, parallel_map, path_generator

__all__ = [
    "VolatilitySpec",
    "PathConfig",
    "Panel",
    "factorize",
    "sample_core_increments",
    "sample_bss_increments",
    "deterministic_increment_cov",
    "hybrid_increment_moments",
    "default_trunc_M",
]

log = logging.getLogger(__name__)

KINDS = ("constant", "deterministic", "core-driven")


@dataclass(frozen=True, eq=False)
class VolatilitySpec:
    """Volatility of the two components.

    Use the constructors :meth:`constant`, :meth:`deterministic` and
    :meth:`core_driven`.  Core-driven volatility is
    ``sigma_j(t) = level_j * (1 + amp_j * tanh(G^(j)_{t - lag}))`` which is
    smooth, bounded and strictly positive for ``0 <= amp_j < 1``.
    """

    kind: str
    values: tuple = (1.0, 1.0)
    funcs: tuple = None
    alpha: tuple = (1.0, 1.0)
    level: tuple = (1.0, 1.0)
    amp: tuple = (0.3, 0.3)
    lag: float = 0.0
    sources: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"volatility kind must be one of {KINDS}, got {self.kind!r}")
        for a in self.alpha:
            if not 0.5 < a <= 1.0:
                raise DomainError(f"Hoelder index alpha={a!r} must lie in (1/2, 1]")
        if self.kind == "constant":
            if len(self.values) != 2 or not all(v > 0 for v in self.values):
                raise DomainError("constant volatility needs two values > 0")
        elif self.kind == "deterministic":
            if self.funcs is None or len(self.funcs) != 2 or not all(map(callable, self.funcs)):
                raise DomainError("deterministic volatility needs two callables of time")
        else:
            if not all(v > 0 for v in self.level):
                raise DomainError("core-driven levels must be > 0")
            if not all(0 <= a < 1 for a in self.amp):
                raise DomainError("core-driven amplitudes must lie in [0, 1)")
            if not self.lag >= 0:
                raise DomainError("core-driven lag must be >= 0")

    @classmethod
    def constant(cls, c1=1.0, c2=1.0):
        return cls("constant", values=(float(c1), float(c2)))

    @classmethod
    def deterministic(cls, f1, f2, alpha=(1.0, 1.0), sources=None):
        return cls("deterministic", funcs=(f1, f2), alpha=tuple(alpha), sources=sources)

    @classmethod
    def core_driven(cls, level=(1.0, 1.0), amp=(0.3, 0.3), lag=0.0):
        return cls("core-driven", level=tuple(level), amp=tuple(amp), lag=float(lag))

    def evaluate(self, t):
        """Deterministic volatility values, shape ``(2, len(t))``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.vstack([np.full(t.shape, v) for v in self.values])
        if self.kind == "deterministic":
            out = np.vstack([np.broadcast_to(np.asarray(f(t), dtype=float), t.shape) for f in self.funcs])
            if not np.all(np.isfinite(out)) or np.any(out <= 0):
                raise DomainError("deterministic volatility must be finite and > 0 on the grid")
            return out
        raise DomainError("core-driven volatility has no deterministic path")

    def describe(self):
        if self.kind == "constant":
            return {"kind": self.kind, "values": list(self.values)}
        if self.kind == "deterministic":
            src = self.sources or tuple(getattr(f, "source", repr(f)) for f in self.funcs)
            return {"kind": self.kind, "sigma1": src[0], "sigma2": src[1], "alpha": list(self.alpha)}
        return {"kind": self.kind, "level": list(self.level), "amp": list(self.amp), "lag": self.lag}


@dataclass(frozen=True)
class PathConfig:
    """Discretisation and Monte Carlo settings.

    Parameters
    ----------
    n : int
        Sampling frequency.
    T : float
        Horizon; ``N = floor(n T)`` increments are produced.
    n_paths : int
    seed : int
        Root seed, 0 <= seed < 2**64.
    trunc_M : float or None
        Length of history before time 0 that is simulated; ``None`` picks
        the smallest value whose neglected kernel mass is below
        ``1e-6 tau_n**2``.
    oversample : int
        Fine-grid factor for stochastic volatility (and for the
        volatility integrals).
    workers : int
        Threads used for sampling; results do not depend on it.
    """

    n: int
    T: float = 1.0
    n_paths: int = 1000
    seed: int = 0
    trunc_M: float = None
    oversample: int = 1
    workers: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if not self.T > 0 or self.n * self.T < 1:
            raise DomainError("need T > 0 and n*T >= 1")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise DomainError("n_paths must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must lie in [0, 2**64)")
        if self.trunc_M is not None and not self.trunc_M > 0:
            raise DomainError("trunc_M must be > 0")
        if int(self.oversample) != self.oversample or self.oversample < 1:
            raise DomainError("oversample must be an integer >= 1")
        if int(self.workers) != self.workers or self.workers < 1:
            raise DomainError("workers must be an integer >= 1")

    @property
    def N(self):
        return int(math.floor(self.n * self.T + 1e-9))


@dataclass(eq=False)
class Panel:
    """Increments of both components for every path.

    ``dy1``, ``dy2`` have shape ``(n_paths, N)``.  For ``scaled`` panels they
    are core increments divided by ``tau``.  ``sig_int`` and ``sig2_int``
    (shape ``(n_paths or 1, N + 1)``) hold the cumulative integrals
    ``int_0^{i/n} sigma1 sigma2`` and ``int_0^{i/n} (sigma1 sigma2)**2``.
    """

    n: int
    dy1: np.ndarray
    dy2: np.ndarray
    scaled: bool
    tau: tuple
    levels0: np.ndarray = None
    sig_int: np.ndarray = None
    sig2_int: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.dy1.shape[0]

    @property
    def N(self):
        return self.dy1.shape[1]

    def terminal_levels(self):
        """``G^(j)_T`` per path, shape ``(n_paths, 2)`` (core panels with levels)."""
        if self.levels0 is None or not self.scaled:
            raise DomainError("terminal levels need a scaled panel sampled with levels")
        s1 = self.tau[0] * self.dy1.sum(axis=1)
        s2 = self.tau[1] * self.dy2.sum(axis=1)
        return self.levels0 + np.column_stack([s1, s2])

    def sigma_integral(self, t, squared=False):
        """Cumulative volatility integral up to ``floor(n t) / n`` per path."""
        arr = self.sig2_int if squared else self.sig_int
        i = int(math.floor(self.n * t + 1e-9))
        if arr is None:
            return np.full(self.n_paths, i / self.n)
        return np.broadcast_to(arr[:, i], (self.n_paths,))

    def to_csv(self, path, header=()):
        """One row per increment: ``path, i, dG1, dG2`` (or ``dY1, dY2``)."""
        names = ("dG1", "dG2") if self.scaled else ("dY1", "dY2")
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["path", "i", *names])
            for p in range(self.n_paths):
                for i in range(self.N):
                    w.writerow([p, i + 1, f"{self.dy1[p, i]:.17g}", f"{self.dy2[p, i]:.17g}"])

    @classmethod
    def from_csv(cls, path, n, scaled=None, tau=(1.0, 1.0)):
        """Read a panel written by :meth:`to_csv` (or any file with that schema)."""
        rows = []
        cols = None
        with open(path, newline="") as fh:
            lines = (ln for ln in fh if not ln.startswith("#"))
            for rec in csv.reader(lines):
                if cols is None:
                    cols = rec
                    continue
                if rec:
                    rows.append(rec)
        if cols is None or len(cols) != 4 or cols[:2] != ["path", "i"]:
            raise DomainError(f"{path}: expected columns path,i,dX1,dX2")
        if scaled is None:
            scaled = cols[2] == "dG1"
        data = np.array(rows, dtype=float)
        paths = data[:, 0].astype(int)
        idx = data[:, 1].astype(int)
        P, N = paths.max() + 1, idx.max()
        if data.shape[0] != P * N:
            raise DomainError(f"{path}: panel is not rectangular")
        d1 = np.full((P, N), np.nan)
        d2 = np.full((P, N), np.nan)
        d1[paths, idx - 1] = data[:, 2]
        d2[paths, idx - 1] = data[:, 3]
        if np.isnan(d1).any():
            raise DomainError(f"{path}: missing increments")
        return cls(int(n), d1, d2, bool(scaled), tuple(tau))


# ---------------------------------------------------------------- factorising


def factorize(m, exact_rank=False):
    """Square-root factor ``L`` with ``L @ L.T ~ m``.

    Cholesky is tried with growing diagonal jitter (relative to the largest
    variance, up to 1e-10).  With ``exact_rank`` a spectral factor with small
    eigenvalues set to zero is used instead, which keeps exactly collinear
    coordinates collinear.
    """
    m = np.asarray(m)
    scale = float(np.max(np.diag(m)))
    if exact_rank:
        w, v = np.linalg.eigh(m)
        if w[0] < -1e-8 * scale:
            raise FactorizationError(
                f"covariance has eigenvalue {w[0]:.3e}; inspect IncrementCovariance.min_eigenvalue()"
            )
        w = np.where(w > 1e-12 * scale, w, 0.0)
        return v * np.sqrt(w)
    for jit in (0.0, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10):
        a = np.array(m, dtype=float, order="F")
        if jit:
            a[np.diag_indices_from(a)] += jit * scale
        try:
            L = cholesky(a, lower=True, overwrite_a=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if jit:
            log.warning("Cholesky needed relative jitter %.0e", jit)
        return L
    raise FactorizationError(
        "Cholesky failed even with jitter 1e-10; the covariance is not positive "
        "definite, check min_eigenvalue() and the quadrature tolerances"
    )


def _cached_factor(key, build):
    return CACHE.get_or_build(key, build)


def _draw(L, cfg, dim):
    def work(rng_range):
        s, e = rng_range
        E = np.stack([path_generator(cfg.seed, p).standard_normal(dim) for p in range(s, e)])
        return E @ L.T

    blocks = parallel_map(work, chunk_ranges(cfg.n_paths), cfg.workers)
    return np.vstack(blocks)


def _exact_rank(p):
    return abs(p.rho) == 1.0


# ---------------------------------------------------------------- core


def sample_core_increments(p, cfg, q=QuadratureConfig(), with_levels=False):
    """Exact panel of scaled core increments ``Delta_i G^(j) / tau_j``.

    With ``with_levels`` the levels ``G^(1)_0, G^(2)_0`` are drawn jointly
    and stored on the panel (see :meth:`Panel.terminal_levels`).
    """
    N = cfg.N
    cov = build_increment_cov(p, cfg.n, N, q, with_levels=with_levels)
    L = _cached_factor(("core", p, cfg.n, N, q, with_levels), lambda: factorize(cov.matrix, _exact_rank(p)))
    X = _draw(L, cfg, cov.dim)
    lv = X[:, 2 * N :] if with_levels else None
    return Panel(cfg.n, X[:, :N], X[:, N : 2 * N], True, cov.tau, levels0=lv, meta={"route": "core"})


# ---------------------------------------------------------------- helpers


def default_trunc_M(p, n, q=QuadratureConfig()):
    """Smallest history length with ``int_M^inf g_j**2 < 1e-6 tau_j**2`` for both."""
    M = 0.0
    for k, t in zip((p.k1, p.k2), taus(p, n, q)):
        M = max(M, tail_cutoff(2 * k.delta, 2 * k.decay, 1e-6 * t * t, floor=1.0 / n))
    return M


def _truncation_check(p, n, M, q):
    for j, (k, t) in enumerate(zip((p.k1, p.k2), taus(p, n, q)), start=1):
        bias = math.sqrt(gamma_tail_bound(M, 2 * k.delta, 2 * k.decay)) / t
        if bias > 0.01:
            msg = (
                f"component {j}: truncation at M={M:.4g} leaves an estimated bias of "
                f"{100 * bias:.2f}% of tau_n"
            )
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
            log.warning(msg)


def _cum_trapezoid(f, h):
    out = np.zeros(f.shape[:-1] + (f.shape[-1],))
    out[..., 1:] = np.cumsum(0.5 * h * (f[..., 1:] + f[..., :-1]), axis=-1)
    return out


def _coarse(cum, kappa):
    return cum[..., ::kappa]


# ---------------------------------------------------------------- deterministic


def _node_set(h, upper, wmax, gl_points=16, ts_level=4):
    """Nodes on ``[0, upper]``: tanh-sinh on ``[0,h]`` and ``[h,2h]``, graded GL beyond.

    Returns the nodes ``x``, the weights and ``x - h`` computed without
    cancellation (it matters next to the singularity at ``x = h``).
    """
    t, wt = _tanh_sinh(ts_level)
    xs = [h * t, h + h * t]
    ws = [h * wt, h * wt]
    xm = [h * t - h, h * t]
    edges = [2 * h]
    while edges[-1] < upper:
        edges.append(edges[-1] + min(edges[-1], wmax))
    edges[-1] = max(upper, 2 * h)
    e = np.asarray(edges)
    a, b = e[:-1], e[1:]
    gx, gw = _gauss_legendre(gl_points)
    xs.append((a[:, None] + (b - a)[:, None] * gx).ravel())
    ws.append(((b - a)[:, None] * gw).ravel())
    xm.append(xs[-1] - h)
    return np.concatenate(xs), np.concatenate(ws), np.concatenate(xm)


def _scatter_matrix(x, h, size):
    """Linear-interpolation weights of the nodes onto the grid ``0, h, 2h, ...``."""
    pos = x / h
    m0 = np.floor(pos).astype(int)
    fr = pos - m0
    rows = np.concatenate([np.arange(x.size), np.arange(x.size)])
    cols = np.concatenate([m0, m0 + 1])
    vals = np.concatenate([1.0 - fr, fr])
    keep = cols < size
    return sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(x.size, size))


def _increment(kern, x, xm):
    """``g(x) - g(xm)`` with ``xm = x - h`` supplied by the caller."""
    return kern(x) - kern(xm)


def _lag_covariances(ka, kb, rab, S, J0, N, h, ks, U, wmax, chunk=64):
    """``Cov(dY^a_i, dY^b_{i+k})`` for ``i = 1..N-k``, one row per lag in ``ks``.

    ``S`` is ``sigma_a sigma_b`` on the grid ``(-J0 .. N) h`` (zero before
    ``-J0 h``).  The covariance is ``rab int_0^inf A_k(u) S(i h - u) du``
    with ``A_k(u) = (g_a(u) - g_a(u-h)) (g_b(u+kh) - g_b(u+(k-1)h))`` and
    ``S`` interpolated linearly between grid points.
    """
    x, w, xm = _node_set(h, U, wmax)
    size = N + J0 + 2
    P = _scatter_matrix(x, h, size)
    inc_a = _increment(ka, x, xm) * w
    out = np.zeros((len(ks), N))
    for s in range(0, len(ks), chunk):
        kk = np.asarray(ks[s : s + chunk], dtype=float)[:, None]
        inc_b = _increment(kb, x[None, :] + kk * h, np.where(kk == 0, xm[None, :], x[None, :] + (kk - 1) * h))
        A = inc_a[None, :] * inc_b
        omega = (P.T @ A.T).T
        full = fftconvolve(omega, S[None, :], axes=1)
        # index i of the lag row sits at i + J0 of the full convolution
        out[s : s + chunk] = rab * full[:, J0 + 1 : J0 + 1 + N]
    return out


def deterministic_increment_cov(p, vol, n, N, M, h_sigma=None):
    """Covariance of raw increments ``(dY1_1..dY1_N, dY2_1..dY2_N)``.

    Exact for the Gaussian law of the truncated process up to quadrature
    and the linear interpolation of ``sigma_a sigma_b`` between grid points.
    """
    h = 1.0 / n
    J0 = int(math.ceil(M / h))
    grid = h * np.arange(-J0, N + 1)
    sig = vol.evaluate(grid)
    lam = max(p.k1.decay, p.k2.decay)
    wmax = min(0.05, 0.5 / lam)
    U = (N + J0 + 1) * h
    ks = np.arange(N)
    blocks = {}
    for a, b in ((1, 1), (2, 2), (1, 2), (2, 1)):
        ka, kb = p.kernel(a), p.kernel(b)
        rab = p.rho_ij(a, b)
        S = sig[a - 1] * sig[b - 1]
        kk = ks if (a, b) != (2, 1) else ks[1:]
        if rab == 0.0:
            blocks[a, b] = np.zeros((len(kk), N))
        else:
            blocks[a, b] = _lag_covariances(ka, kb, rab, S, J0, N, h, kk, U, wmax)
    C = np.zeros((2 * N, 2 * N))
    ii = np.arange(N)
    for k in range(N):
        i = ii[: N - k]
        v11 = blocks[1, 1][k, : N - k]
        v22 = blocks[2, 2][k, : N - k]
        v12 = blocks[1, 2][k, : N - k]
        C[i, i + k] = v11
        C[i + k, i] = v11
        C[N + i, N + i + k] = v22
        C[N + i + k, N + i] = v22
        # Cov(dY1_i, dY2_{i+k})
        C[i, N + i + k] = v12
        C[N + i + k, i] = v12
        if k >= 1:
            v21 = blocks[2, 1][k - 1, : N - k]
            # Cov(dY2_i, dY1_{i+k})
            C[N + i, i + k] = v21
            C[i + k, N + i] = v21
    return C


# ---------------------------------------------------------------- core-driven


def _bstar(k, delta):
    """Optimal evaluation points of the hybrid scheme (in units of the fine step)."""
    k = np.asarray(k, dtype=float)
    return ((k ** (delta + 1) - (k - 1) ** (delta + 1)) / (delta + 1)) ** (1.0 / delta)


def _scheme_weights(kern, h, L):
    """``w[0] = 0``, ``w[d] = g(b*_{d+1} h)`` for ``d >= 1``."""
    w = np.zeros(L)
    d = np.arange(1, L)
    w[1:] = kern(_bstar(d + 1, kern.delta) * h)
    return w


def _cell_covariance(d1, d2, h):
    """Covariance of ``(dW, J1, J2)`` over one cell, ``J_j = int (t - s)**d_j dW``."""
    ds = [0.0, d1, d2]
    C = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            e = ds[i] + ds[j] + 1.0
            C[i, j] = h**e / e
    return C


def hybrid_increment_moments(kern, n, kappa, M, lags=(0, 1, 2)):
    """Covariances of coarse increments implied by the fine-grid scheme (sigma = 1).

    Returns ``Cov(dG_i, dG_{i+k}) / tau_n**2``-style raw covariances for each
    lag in ``lags``; used to study convergence in ``kappa``.
    """
    h = 1.0 / (n * kappa)
    J0 = int(math.ceil(M / h))
    L = J0 + kappa * (max(lags) + 2) + 1
    w = _scheme_weights(kern, h, L)
    e = math.exp(-kern.decay * h / 2)
    Cc = _cell_covariance(kern.delta, kern.delta, h)[:2, :2]

    def coeffs(pt):
        # G at fine point pt (cells 0..pt-1): dW coefficient w[pt-1-c], J at cell pt-1
        a = np.zeros(L)
        b = np.zeros(L)
        c = np.arange(pt)
        a[c] = w[pt - 1 - c]
        b[pt - 1] = e
        return a, b

    def cov(u, v):
        return Cc[0, 0] * u[0] @ v[0] + Cc[0, 1] * (u[0] @ v[1] + u[1] @ v[0]) + Cc[1, 1] * u[1] @ v[1]

    def inc(i):
        a1, b1 = coeffs(J0 + i * kappa)
        a0, b0 = coeffs(J0 + (i - 1) * kappa)
        return a1 - a0, b1 - b0

    base = inc(1)
    return np.array([cov(base, inc(1 + k)) for k in lags])


def _core_driven_path(p, vol, cfg, M, path):
    n, kappa = cfg.n, cfg.oversample
    h = 1.0 / (n * kappa)
    N = cfg.N
    J0 = int(math.ceil(M / h))
    Nm = J0 + kappa * N
    k1, k2 = p.k1, p.k2
    rng = path_generator(cfg.seed, path)
    C1 = _cell_covariance(k1.delta, k2.delta, h)
    F1 = factorize(C1, exact_rank=True)
    F2 = factorize(_cell_covariance(k2.delta, k2.delta, h)[:2, :2], exact_rank=True)
    X1 = rng.standard_normal((Nm, 3)) @ F1.T
    X2 = rng.standard_normal((Nm, 2)) @ F2.T
    rho, rc = p.rho, math.sqrt(max(0.0, 1.0 - p.rho * p.rho))
    dW = (X1[:, 0], rho * X1[:, 0] + rc * X2[:, 0])
    J = (X1[:, 1], rho * X1[:, 2] + rc * X2[:, 1])
    dy = []
    sigs = []
    lag = int(round(vol.lag / h))
    for j, kern in enumerate((k1, k2)):
        w = _scheme_weights(kern, h, Nm)
        e = math.exp(-kern.decay * h / 2)
        G = fftconvolve(dW[j], w)[:Nm] + e * J[j]
        # sigma at left endpoint s_c uses G(s_c - lag) = G-point index c - lag
        Gl = np.zeros(Nm + 1)
        idx = np.arange(Nm + 1) - lag
        ok = idx >= 1
        Gl[ok] = G[idx[ok] - 1]
        sig = vol.level[j] * (1.0 + vol.amp[j] * np.tanh(Gl))
        Y = fftconvolve(sig[:Nm] * dW[j], w)[:Nm] + e * sig[:Nm] * J[j]
        pts = J0 - 1 + kappa * np.arange(N + 1)
        dy.append(np.diff(Y[pts]))
        sigs.append(sig[J0:])
    ss = sigs[0] * sigs[1]
    return dy[0], dy[1], _coarse(_cum_trapezoid(ss, h), kappa), _coarse(_cum_trapezoid(ss * ss, h), kappa)


def sample_bss_increments(p, vol, cfg, q=QuadratureConfig()):
    """Panel of raw BSS increments ``Delta_i Y^(1), Delta_i Y^(2)``.

    Constant volatility rescales exact core increments; deterministic
    volatility draws exactly from the Gaussian law assembled by
    :func:`deterministic_increment_cov`; core-driven volatility uses the
    fine-grid scheme with step ``1 / (n * oversample)``.
    """
    if not isinstance(vol, VolatilitySpec):
        raise DomainError("vol must be a VolatilitySpec")
    N, n = cfg.N, cfg.n
    tau = taus(p, n, q)
    if vol.kind == "constant":
        core = sample_core_increments(p, cfg, q)
        c1, c2 = vol.values
        dy1 = c1 * tau[0] * core.dy1
        dy2 = c2 * tau[1] * core.dy2
        grid = np.arange(N + 1) / n
        return Panel(
            n, dy1, dy2, False, tau,
            sig_int=(c1 * c2 * grid)[None, :],
            sig2_int=((c1 * c2) ** 2 * grid)[None, :],
            meta={"route": "constant"},
        )
    M = cfg.trunc_M if cfg.trunc_M is not None else default_trunc_M(p, n, q)
    _truncation_check(p, n, M, q)
    if vol.kind == "deterministic":
        if 2 * N > MAX_DIM:
            raise MatrixSizeError(f"covariance of dimension {2 * N} exceeds the cap {MAX_DIM}")
        key = ("det", p, vol, n, N, M)
        L = _cached_factor(key, lambda: factorize(deterministic_increment_cov(p, vol, n, N, M), _exact_rank(p)))
        X = _draw(L, cfg, 2 * N)
        kappa = cfg.oversample
        hf = 1.0 / (n * kappa)
        sig = vol.evaluate(hf * np.arange(N * kappa + 1))
        ss = sig[0] * sig[1]
        return Panel(
            n, X[:, :N], X[:, N:], False, tau,
            sig_int=_coarse(_cum_trapezoid(ss, hf), kappa)[None, :],
            sig2_int=_coarse(_cum_trapezoid(ss * ss, hf), kappa)[None, :],
            meta={"route": "deterministic", "trunc_M": M},
        )
    for k in (p.k1, p.k2):
        if not isinstance(k, GammaKernel):
            raise DomainError("the fine-grid scheme needs Gamma kernels")

    def work(rng_range):
        s, e = rng_range
        return [_core_driven_path(p, vol, cfg, M, i) for i in range(s, e)]

    res = [r for block in parallel_map(work, chunk_ranges(cfg.n_paths), cfg.workers) for r in block]
    dy1 = np.stack([r[0] for r in res])
    dy2 = np.stack([r[1] for r in res])
    return Panel(
        n, dy1, dy2, False, tau,
        sig_int=np.stack([r[2] for r in res]),
        sig2_int=np.stack([r[3] for r in res]),
        meta={"route": "core-driven", "trunc_M": M, "oversample": cfg.oversample},
    )
