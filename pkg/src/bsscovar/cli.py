"""Command-line interface: ``bsscovar <command> [--config FILE] [overrides]``.

Exit status is 0 on success, 2 for invalid input and 3 for failures while
computing.  Errors are also written to stderr as one JSON object.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .asymptotics import LimitSpec, c11, mu_n
from .config import COMMANDS, parse_config
from .covariance import taus
from .errors import BssError, ConfigError, DomainError
from .estimators import clt_statistic_core, covariation_series, lln_estimator
from .harness import run_clt_experiment, run_lln_experiment
from .kernels import h_gamma, h_gamma_directional
from .simulate import Panel, sample_bss_increments, sample_core_increments

__all__ = ["main", "build_parser", "run"]

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("bsscovar")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("validation", message)
        sys.exit(EXIT_VALIDATION)


def build_parser():
    ap = _Parser(prog="bsscovar", description="Bivariate BSS realised covariation toolkit")
    ap.add_argument("--version", action="version", version=f"bsscovar {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("--out", metavar="DIR")
    ap.add_argument("--seed", type=int, metavar="U64")
    ap.add_argument("--workers", type=int, metavar="N")
    for name in ("delta1", "delta2", "lambda1", "lambda2", "rho", "horizon"):
        ap.add_argument(f"--{name}", type=float)
    ap.add_argument("--n", type=int)
    ap.add_argument("--paths", type=int)
    return ap


def _emit_error(category, message, details=None):
    rec = {"error": category, "message": message}
    if details:
        rec["details"] = details
    sys.stderr.write(json.dumps(rec, ensure_ascii=False) + "\n")


def _g6(x):
    return f"{x:.6g}"


def _header(cfg):
    return [f"bsscovar {__version__}", "config " + json.dumps(cfg.header_dict(), sort_keys=True)]


def _write_text(path, header, body):
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(body)


def _write_json(path, header, obj):
    _write_text(path, header, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _kernel_info(cfg):
    p, q = cfg.pair, cfg.quad
    try:
        H = h_gamma(p)
        h_note = _g6(H)
    except DomainError as exc:
        H, h_note = None, f"undefined ({exc})"
    rows = []
    print(f"H = {h_note}")
    print("n, tau1_n, tau2_n, mu_n")
    for n in cfg.n_values:
        t1, t2 = taus(p, n, q)
        mu = mu_n(p, n, q)
        rows.append((n, t1, t2, mu))
        print(f"{n}, {_g6(t1)}, {_g6(t2)}, {_g6(mu)}")
    path = os.path.join(cfg.out, "kernel_info.csv")
    lines = "n,tau1,tau2,mu_n\n" + "".join(f"{n},{a:.17g},{b:.17g},{c:.17g}\n" for n, a, b, c in rows)
    _write_text(path, _header(cfg) + [f"H {H!r}"], lines)
    return [path]


def _asymptotics(cfg):
    spec = LimitSpec.from_pair(cfg.pair)
    beta, K, bound = c11(spec, cfg.tol)
    out = {
        "beta": beta,
        "K_used": K,
        "tail_bound": bound,
        "H": spec.H,
        "H12": h_gamma_directional(cfg.pair, 1, 2),
        "H21": h_gamma_directional(cfg.pair, 2, 1),
        "tol": cfg.tol,
    }
    print(f"beta = {_g6(beta)}  (K_used = {K}, tail_bound = {bound:.6g})")
    print(f"H = {_g6(spec.H)}")
    path = os.path.join(cfg.out, "asymptotics.json")
    _write_json(path, _header(cfg), out)
    return [path]


def _simulate(cfg):
    if cfg.mode == "core":
        panel = sample_core_increments(cfg.pair, cfg.paths, cfg.quad)
    else:
        panel = sample_bss_increments(cfg.pair, cfg.vol, cfg.paths, cfg.quad)
    path = os.path.join(cfg.out, "increments.csv")
    panel.to_csv(path, header=_header(cfg))
    print(f"wrote {panel.n_paths} paths x {panel.N} increments to {path}")
    return [path]


def _estimate(cfg):
    p, q, n = cfg.pair, cfg.quad, cfg.paths.n
    tau = taus(p, n, q)
    panel = Panel.from_csv(cfg.input, n, tau=tau)
    if panel.scaled:
        dx, dy = panel.dy1 * tau[0], panel.dy2 * tau[1]
    else:
        dx, dy = panel.dy1, panel.dy2
    series = covariation_series(dx, dy, n)
    T = panel.N / n
    lln = lln_estimator(dx, dy, p, n, T, q)
    spath = os.path.join(cfg.out, "covariation_series.csv")
    with open(spath, "w", newline="") as fh:
        for line in _header(cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["path", "i", "t", "rc"])
        for pth in range(panel.n_paths):
            for i in range(panel.N):
                w.writerow([pth, i + 1, f"{series.t_grid[i]:.17g}", f"{series.values[pth, i]:.17g}"])
    summary = {"n": n, "horizon": T, "paths": panel.n_paths, "lln_estimate": lln.tolist()}
    if panel.scaled:
        summary["clt_statistic_core"] = clt_statistic_core(panel, p, n, T, q).tolist()
    jpath = os.path.join(cfg.out, "estimate_summary.json")
    _write_json(jpath, _header(cfg), summary)
    print(f"median LLN estimate = {_g6(float(np.median(lln)))} over {panel.n_paths} paths")
    return [spath, jpath]


def _mc_clt(cfg):
    rep = run_clt_experiment(cfg.pair, cfg.vol, cfg.paths, cfg.mode, cfg.times, cfg.quad, cfg.tol)
    rep.config = cfg.header_dict()
    paths = rep.write(cfg.out, "mc_clt")
    print(
        f"empirical variance {_g6(rep.empirical_variance)} vs beta {_g6(rep.theoretical_beta)}; "
        f"KS D = {_g6(rep.ks_statistic)}, p = {_g6(rep.ks_pvalue)}"
    )
    return paths


def _mc_lln(cfg):
    rep = run_lln_experiment(cfg.pair, cfg.vol, cfg.paths, cfg.n_list, cfg.quad)
    rep.config = cfg.header_dict()
    paths = rep.write(cfg.out, "mc_lln")
    for row in rep.per_n:
        print(f"n = {row['n']}: median |error| = {_g6(row['median_abs_error'])}")
    return paths


_DISPATCH = {
    "kernel-info": _kernel_info,
    "asymptotics": _asymptotics,
    "simulate": _simulate,
    "estimate": _estimate,
    "mc-clt": _mc_clt,
    "mc-lln": _mc_lln,
}


def run(cfg):
    """Execute a validated configuration; returns the list of written files."""
    os.makedirs(cfg.out, exist_ok=True)
    return _DISPATCH[cfg.command](cfg)


def _setup_logging():
    name = os.environ.get("BSSCOVAR_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not isinstance(level, int):
        log.warning("unknown BSSCOVAR_LOG level %r, using WARNING", name)


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in
                 ("delta1", "delta2", "lambda1", "lambda2", "rho", "n", "paths", "horizon", "seed", "out", "workers")}
    try:
        cfg = parse_config(args.command, args.config, overrides)
        run(cfg)
    except ConfigError as exc:
        _emit_error("validation", "invalid configuration", exc.errors)
        return EXIT_VALIDATION
    except BssError as exc:
        _emit_error(exc.category, str(exc))
        return EXIT_VALIDATION if exc.category == "validation" else EXIT_RUNTIME
    except OSError as exc:
        _emit_error("runtime", str(exc))
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
