"""Monte Carlo experiments for the central limit theorem and the law of large numbers."""

from dataclasses import asdict, dataclass, field, replace
import csv
import json
import math
import os
import time

import numpy as np
from scipy.special import kolmogorov, ndtr

from . import __version__
from .asymptotics import LimitSpec, c11, finite_n_variance, mu_n
from .errors import DomainError
from .estimators import clt_statistic_bss, clt_statistic_core, lln_estimator
from .kernels import CLT_RANGE, LLN_RANGE, QuadratureConfig
from .simulate import PathConfig, VolatilitySpec, sample_bss_increments, sample_core_increments

__all__ = [
    "ExperimentReport",
    "ks_statistic",
    "run_clt_experiment",
    "run_lln_experiment",
    "normal_cdf",
    "describe_pair",
]

CLT_TIMES = (0.25, 0.5, 1.0)


def normal_cdf(x):
    return ndtr(x)


def ks_statistic(samples, cdf=normal_cdf):
    """Kolmogorov-Smirnov distance to ``cdf`` with its asymptotic p-value.

    Both the empirical and the reference distribution are compared on each
    side of every sample point, so step-function references are handled
    exactly.

    Returns
    -------
    D, pvalue : float
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = x.size
    if m < 100:
        raise DomainError(f"KS test needs at least 100 samples, got {m}")
    right = np.searchsorted(x, x, side="right") / m
    left = np.searchsorted(x, x, side="left") / m
    f_at = np.asarray(cdf(x), dtype=float)
    f_left = np.asarray(cdf(np.nextafter(x, -np.inf)), dtype=float)
    D = float(max(np.max(np.abs(right - f_at)), np.max(np.abs(left - f_left))))
    return D, float(kolmogorov(math.sqrt(m) * D))


def describe_pair(p):
    return {
        "delta1": p.k1.delta,
        "delta2": p.k2.delta,
        "lambda1": p.k1.decay,
        "lambda2": p.k2.decay,
        "rho": p.rho,
    }


@dataclass(eq=False)
class ExperimentReport:
    """Summary of a Monte Carlo experiment.

    ``runtime`` is kept out of :meth:`to_json` so that repeated runs give
    byte-identical reports; :meth:`write` stores it in a separate file.
    """

    kind: str
    config: dict
    empirical_variance: float = float("nan")
    theoretical_beta: float = float("nan")
    ks_statistic: float = float("nan")
    ks_pvalue: float = float("nan")
    per_t: list = field(default_factory=list)
    per_n: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    runtime: float = 0.0
    samples: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("samples")
        d.pop("runtime")
        d["version"] = __version__
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=True)

    def header_lines(self):
        return [f"bsscovar {__version__}", "config " + json.dumps(self.config, sort_keys=True)]

    def write(self, out_dir, stem=None):
        """Write ``<stem>.json``, ``<stem>_samples.csv`` and ``<stem>_timing.json``."""
        stem = stem or self.kind
        os.makedirs(out_dir, exist_ok=True)
        head = "".join(f"# {ln}\n" for ln in self.header_lines())
        rpath = os.path.join(out_dir, f"{stem}.json")
        with open(rpath, "w") as fh:
            fh.write(head + self.to_json() + "\n")
        paths = [rpath]
        if self.samples:
            spath = os.path.join(out_dir, f"{stem}_samples.csv")
            with open(spath, "w", newline="") as fh:
                fh.write(head)
                w = csv.writer(fh)
                key, name = ("n", "estimate") if self.kind == "lln" else ("t", "statistic")
                w.writerow(["path", key, name])
                for t in sorted(self.samples):
                    for i, v in enumerate(self.samples[t]):
                        w.writerow([i, f"{t:.17g}", f"{v:.17g}"])
            paths.append(spath)
        tpath = os.path.join(out_dir, f"{stem}_timing.json")
        with open(tpath, "w") as fh:
            fh.write(head + json.dumps({"runtime_seconds": self.runtime}) + "\n")
        return paths


def _check_clt_range(p):
    for d in p.deltas:
        if not (-0.5 < d < 0.25) or d == 0.0:
            raise DomainError(
                f"delta={d!r} is outside the CLT range {CLT_RANGE}; "
                f"the law of large numbers only needs {LLN_RANGE}"
            )


def _cfg_dict(p, vol, cfg, extra=None):
    d = {"model": describe_pair(p), "paths": asdict(cfg)}
    d["paths"].pop("workers")
    if vol is not None:
        d["volatility"] = vol.describe()
    if extra:
        d.update(extra)
    return d


def _corr(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / den if den > 0 else 0.0


def run_clt_experiment(p, vol, cfg, mode="core", times=CLT_TIMES, q=QuadratureConfig(), tol=1e-10):
    """Sample the CLT statistic over ``cfg.n_paths`` paths and compare with theory.

    Parameters
    ----------
    p : KernelPair
    vol : VolatilitySpec or None
        Ignored in ``core`` mode.
    cfg : PathConfig
        ``cfg.T`` must cover every time in ``times``.
    mode : {"core", "bss"}
    times : sequence of float
        Times at which the statistic is evaluated; the KS verdict and the
        headline variance use the last one.

    Raises
    ------
    DomainError
        If either exponent lies outside the CLT range.
    """
    _check_clt_range(p)
    if mode not in ("core", "bss"):
        raise DomainError(f"mode must be 'core' or 'bss', got {mode!r}")
    if max(times) > cfg.T + 1e-12:
        raise DomainError(f"times {times} exceed the horizon T={cfg.T}")
    t0 = time.perf_counter()
    spec = LimitSpec.from_pair(p)
    beta, K, bound = c11(spec, tol)
    n = cfg.n
    mu = mu_n(p, n, q)
    report = ExperimentReport(
        kind=f"clt-{mode}",
        config=_cfg_dict(p, vol if mode == "bss" else None, cfg, {"mode": mode, "times": list(times)}),
        theoretical_beta=beta,
    )
    diag = {"c11_K_used": K, "c11_tail_bound": bound, "mu_n": mu, "H": spec.H}
    if mode == "core":
        panel = sample_core_increments(p, cfg, q, with_levels=True)
        stat = lambda t: clt_statistic_core(panel, p, n, t, q, mu=mu)
        theo = lambda t: np.full(cfg.n_paths, beta * t)
        exact = finite_n_variance(p, n, times[-1], q)
        diag["finite_n_variance"] = exact
    else:
        if vol is None:
            raise DomainError("bss mode needs a VolatilitySpec")
        panel = sample_bss_increments(p, vol, cfg, q)
        stat = lambda t: clt_statistic_bss(panel, p, vol, n, t, q, mu=mu)
        theo = lambda t: beta * np.asarray(panel.sigma_integral(t, squared=True), dtype=float)
    last = None
    for t in times:
        z = stat(t)
        v = theo(t)
        ev = float(np.var(z, ddof=1))
        tv = float(np.mean(v))
        report.per_t.append(
            {"t": t, "mean": float(np.mean(z)), "empirical_variance": ev,
             "theoretical_variance": tv, "ratio": ev / tv if tv > 0 else float("nan")}
        )
        report.samples[t] = z
        last = (z, v)
    z, v = last
    report.empirical_variance = report.per_t[-1]["empirical_variance"]
    # mixed-normal handling: every path is standardised by its own variance
    report.ks_statistic, report.ks_pvalue = ks_statistic(z / np.sqrt(v))
    if mode == "core":
        GT = panel.terminal_levels()
        bound4 = 4.0 / math.sqrt(cfg.n_paths)
        diag["corr_stat_G1_T"] = _corr(z, GT[:, 0])
        diag["corr_stat_G2_T"] = _corr(z, GT[:, 1])
        diag["independence_bound"] = bound4
    report.diagnostics = diag
    report.runtime = time.perf_counter() - t0
    return report


def run_lln_experiment(p, vol, cfg, n_list=(512, 1024, 2048, 4096), q=QuadratureConfig()):
    """Median absolute error of the LLN estimator over paths, for each ``n``.

    The target is ``rho int_0^T sigma1 sigma2`` (per path for core-driven
    volatility).  Every frequency uses the same root seed.
    """
    vol = vol or VolatilitySpec.constant()
    t0 = time.perf_counter()
    report = ExperimentReport(
        kind="lln", config=_cfg_dict(p, vol, cfg, {"n_list": list(n_list)})
    )
    T = cfg.T
    for n in n_list:
        c = replace(cfg, n=int(n))
        panel = sample_bss_increments(p, vol, c, q)
        est = lln_estimator(panel.dy1, panel.dy2, p, c.n, T, q)
        target = p.rho * np.asarray(panel.sigma_integral(T), dtype=float)
        err = np.abs(est - target)
        report.per_n.append(
            {"n": int(n), "median_abs_error": float(np.median(err)),
             "mean_estimate": float(np.mean(est)), "mean_target": float(np.mean(target)),
             "sd_estimate": float(np.std(est, ddof=1)) if est.size > 1 else 0.0}
        )
        report.samples[float(n)] = est
    report.runtime = time.perf_counter() - t0
    return report
