"""Run configuration: INI files with flag overrides, validated in one pass.

Sections and keys (defaults in parentheses)::

    [model]       delta1 delta2 lambda1 lambda2 rho          (required)
    [volatility]  kind (constant) c1 c2 (1.0)
                  sigma1 sigma2 (expressions in t) alpha1 alpha2 (1.0)
                  level1 level2 (1.0) amp1 amp2 (0.3) lag (0.0)
    [paths]       n (1024) horizon (1.0) paths (1000) seed (0)
                  trunc_M (auto) oversample (1)
    [quadrature]  abs_tol (1e-13) rel_tol (1e-10) max_subdivisions (8192)
                  tail_cutoff (auto)
    [run]         out (.) workers (1) mode (core) n_values (64,256,1024,4096)
                  n_list (512,1024,2048,4096) times (0.25,0.5,1.0) tol (1e-10)
                  input ()
"""

import ast
import configparser
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError, DomainError
from .kernels import LLN_RANGE, GammaKernel, KernelPair, QuadratureConfig
from .simulate import PathConfig, VolatilitySpec

__all__ = ["RunConfig", "parse_config", "compile_expression", "COMMANDS", "SCHEMA"]

COMMANDS = ("kernel-info", "asymptotics", "simulate", "estimate", "mc-clt", "mc-lln")

_REQUIRED = object()

# section -> key -> (parser, default)
SCHEMA = {
    "model": {
        "delta1": (float, _REQUIRED),
        "delta2": (float, _REQUIRED),
        "lambda1": (float, _REQUIRED),
        "lambda2": (float, _REQUIRED),
        "rho": (float, _REQUIRED),
    },
    "volatility": {
        "kind": (str, "constant"),
        "c1": (float, 1.0),
        "c2": (float, 1.0),
        "sigma1": (str, ""),
        "sigma2": (str, ""),
        "alpha1": (float, 1.0),
        "alpha2": (float, 1.0),
        "level1": (float, 1.0),
        "level2": (float, 1.0),
        "amp1": (float, 0.3),
        "amp2": (float, 0.3),
        "lag": (float, 0.0),
    },
    "paths": {
        "n": (int, 1024),
        "horizon": (float, 1.0),
        "paths": (int, 1000),
        "seed": (int, 0),
        "trunc_M": (float, None),
        "oversample": (int, 1),
    },
    "quadrature": {
        "abs_tol": (float, 1e-13),
        "rel_tol": (float, 1e-10),
        "max_subdivisions": (int, 8192),
        "tail_cutoff": (float, None),
    },
    "run": {
        "out": (str, "."),
        "workers": (int, 1),
        "mode": (str, "core"),
        "n_values": ("ints", (64, 256, 1024, 4096)),
        "n_list": ("ints", (512, 1024, 2048, 4096)),
        "times": ("floats", (0.25, 0.5, 1.0)),
        "tol": (float, 1e-10),
        "input": (str, ""),
    },
}

# command-line flag -> (section, key)
FLAG_KEYS = {
    "delta1": ("model", "delta1"),
    "delta2": ("model", "delta2"),
    "lambda1": ("model", "lambda1"),
    "lambda2": ("model", "lambda2"),
    "rho": ("model", "rho"),
    "n": ("paths", "n"),
    "paths": ("paths", "paths"),
    "horizon": ("paths", "horizon"),
    "seed": ("paths", "seed"),
    "out": ("run", "out"),
    "workers": ("run", "workers"),
}


# ------------------------------------------------------------ expressions

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "log": np.log,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class _Expr:
    """Vectorised function of time built from a whitelisted expression."""

    def __init__(self, source):
        self.source = source
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise DomainError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            pass
        elif isinstance(node, ast.Name) and (node.id == "t" or node.id in _CONSTS):
            pass
        elif (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS
            and len(node.args) == 1
            and not node.keywords
        ):
            self._check(node.args[0])
        else:
            raise DomainError(
                f"expression {self.source!r} uses a disallowed construct "
                f"({type(node).__name__}); allowed: numbers, t, pi, e, + - * / **, "
                + ", ".join(sorted(_FUNCS))
            )

    def _eval(self, node, t):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, t), self._eval(node.right, t))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, t)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return t if node.id == "t" else _CONSTS[node.id]
        return _FUNCS[node.func.id](self._eval(node.args[0], t))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(self._eval(self._tree, t), dtype=float), t.shape)

    def __repr__(self):
        return f"expr({self.source!r})"


def compile_expression(source):
    """Compile ``source`` (a function of ``t``) into a vectorised callable."""
    return _Expr(source)


# ------------------------------------------------------------ run config


@dataclass(eq=False)
class RunConfig:
    command: str
    pair: KernelPair
    vol: VolatilitySpec
    paths: PathConfig
    quad: QuadratureConfig
    out: str
    workers: int
    mode: str
    n_values: tuple
    n_list: tuple
    times: tuple
    tol: float
    input: str
    resolved: dict = field(default_factory=dict)

    def header_dict(self):
        """Resolved configuration without settings that must not change outputs."""
        d = {s: dict(v) for s, v in self.resolved.items()}
        d["run"].pop("workers", None)
        d["run"].pop("out", None)
        d["command"] = self.command
        return d


def _convert(kind, raw):
    if kind == "ints":
        return tuple(int(x) for x in str(raw).replace(" ", "").split(",") if x)
    if kind == "floats":
        return tuple(float(x) for x in str(raw).replace(" ", "").split(",") if x)
    if kind is int:
        v = float(raw)
        if v != int(v):
            raise ValueError(f"{raw!r} is not an integer")
        return int(v)
    return kind(raw)


def parse_config(command, path=None, overrides=None):
    """Build a validated :class:`RunConfig` from an INI file and flag overrides.

    All problems are collected and raised together as a :class:`ConfigError`.
    """
    errors = []
    values = {s: {} for s in SCHEMA}
    origin = {}
    if command not in COMMANDS:
        errors.append(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    if path:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError([f"{path}: {exc}"]) from None
        for sec in cp.sections():
            if sec not in SCHEMA:
                errors.append(f"{path} [{sec}]: unknown section")
                continue
            for key, raw in cp.items(sec):
                loc = f"{path} [{sec}] {key}"
                if key not in SCHEMA[sec]:
                    errors.append(f"{loc}: unknown key")
                    continue
                values[sec][key] = raw
                origin[sec, key] = loc
    for flag, raw in (overrides or {}).items():
        if raw is None:
            continue
        sec, key = FLAG_KEYS[flag]
        values[sec][key] = raw
        origin[sec, key] = f"--{flag}"
    resolved = {}
    for sec, keys in SCHEMA.items():
        resolved[sec] = {}
        for key, (kind, default) in keys.items():
            loc = origin.get((sec, key), f"[{sec}] {key}")
            if key in values[sec]:
                try:
                    resolved[sec][key] = _convert(kind, values[sec][key])
                except (TypeError, ValueError) as exc:
                    errors.append(f"{loc}: cannot read {values[sec][key]!r} ({exc})")
                    resolved[sec][key] = None
            elif default is _REQUIRED:
                errors.append(f"{loc}: required (set it in the file or with --{key})")
                resolved[sec][key] = None
            else:
                resolved[sec][key] = default
    m, v, pth, qd, run = (resolved[s] for s in ("model", "volatility", "paths", "quadrature", "run"))

    def loc(sec, key):
        return origin.get((sec, key), f"[{sec}] {key}")

    kernels = []
    for j in (1, 2):
        d, lam = m[f"delta{j}"], m[f"lambda{j}"]
        ok = True
        if d is not None and (not (-0.5 < d < 0.5) or d == 0.0):
            errors.append(f"{loc('model', f'delta{j}')}: delta{j}={d!r} violates {LLN_RANGE}")
            ok = False
        if lam is not None and not lam > 0:
            errors.append(f"{loc('model', f'lambda{j}')}: lambda{j}={lam!r} must be > 0")
            ok = False
        kernels.append(GammaKernel(d, lam) if ok and d is not None and lam is not None else None)
    rho = m["rho"]
    if rho is not None and not -1.0 <= rho <= 1.0:
        errors.append(f"{loc('model', 'rho')}: rho={rho!r} must lie in [-1, 1]")
    pair = None
    if all(kernels) and rho is not None and -1.0 <= rho <= 1.0:
        pair = KernelPair(kernels[0], kernels[1], rho)

    vol = None
    try:
        kind = v["kind"]
        if kind == "constant":
            vol = VolatilitySpec.constant(v["c1"], v["c2"])
        elif kind == "deterministic":
            if not v["sigma1"] or not v["sigma2"]:
                raise DomainError("deterministic volatility needs sigma1 and sigma2 expressions")
            f1, f2 = compile_expression(v["sigma1"]), compile_expression(v["sigma2"])
            vol = VolatilitySpec.deterministic(f1, f2, (v["alpha1"], v["alpha2"]), (f1.source, f2.source))
        elif kind == "core-driven":
            vol = VolatilitySpec.core_driven((v["level1"], v["level2"]), (v["amp1"], v["amp2"]), v["lag"])
        else:
            raise DomainError(f"kind={kind!r} must be one of constant, deterministic, core-driven")
    except (DomainError, TypeError) as exc:
        errors.append(f"[volatility]: {exc}")

    paths = None
    try:
        paths = PathConfig(
            n=pth["n"], T=pth["horizon"], n_paths=pth["paths"], seed=pth["seed"],
            trunc_M=pth["trunc_M"], oversample=pth["oversample"], workers=run["workers"],
        )
    except (DomainError, TypeError) as exc:
        errors.append(f"[paths]: {exc}")

    quad = None
    try:
        quad = QuadratureConfig(qd["abs_tol"], qd["rel_tol"], qd["max_subdivisions"], qd["tail_cutoff"])
    except (DomainError, TypeError) as exc:
        errors.append(f"[quadrature]: {exc}")

    if run["mode"] not in ("core", "bss"):
        errors.append(f"{loc('run', 'mode')}: mode must be 'core' or 'bss'")
    if run["tol"] is not None and not run["tol"] > 0:
        errors.append(f"{loc('run', 'tol')}: tol must be > 0")
    for key in ("n_values", "n_list"):
        if run[key] is not None and any(x < 1 for x in run[key]):
            errors.append(f"{loc('run', key)}: frequencies must be >= 1")
    if command == "estimate" and not run["input"]:
        errors.append(f"{loc('run', 'input')}: estimate needs an input CSV")
    if errors:
        raise ConfigError(errors)
    return RunConfig(
        command=command, pair=pair, vol=vol, paths=paths, quad=quad, out=run["out"],
        workers=run["workers"], mode=run["mode"], n_values=run["n_values"],
        n_list=run["n_list"], times=run["times"], tol=run["tol"], input=run["input"],
        resolved=resolved,
    )
