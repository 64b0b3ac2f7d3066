import json
import math

import numpy as np
import pytest

from bsscovar import DomainError, GammaKernel, KernelPair
from bsscovar.asymptotics import LimitSpec, c11, rho_theta
from bsscovar.harness import ExperimentReport, ks_statistic, run_clt_experiment, run_lln_experiment
from bsscovar.simulate import PathConfig, VolatilitySpec


def pair(d1=0.1, d2=0.1, rho=0.5):
    return KernelPair(GammaKernel(d1, 1.0), GammaKernel(d2, 1.0), rho)


def test_ks_null_and_power():
    x = np.random.default_rng(30).standard_normal(10**4)
    D, pv = ks_statistic(x)
    assert 0 <= D <= 1 and pv > 0.001
    D1, pv1 = ks_statistic(x + 1.0)
    assert pv1 < 1e-6 and D1 > D


def test_ks_exact_step_reference():
    x = np.repeat(np.arange(10.0), 20)
    atoms = np.arange(10.0)
    cdf = lambda t: np.searchsorted(atoms, t, side="right") / 10
    D, _ = ks_statistic(x, cdf)
    assert D == pytest.approx(0.0, abs=1e-15)


def test_ks_against_known_value():
    x = np.linspace(-2, 2, 400)
    from scipy import stats

    D, pv = ks_statistic(x)
    ref = stats.kstest(x, "norm", method="asymp")
    assert D == pytest.approx(ref.statistic, rel=1e-12)
    assert pv == pytest.approx(ref.pvalue, rel=1e-6)


def test_ks_needs_samples():
    with pytest.raises(DomainError):
        ks_statistic(np.zeros(99))


def test_clt_range_rejection():
    cfg = PathConfig(64, 1.0, 100)
    with pytest.raises(DomainError, match=r"\(−1/2, 1/4\)"):
        run_clt_experiment(pair(0.3, 0.3), None, cfg)
    with pytest.raises(DomainError):
        run_clt_experiment(pair(), None, cfg, mode="other")
    with pytest.raises(DomainError):
        run_clt_experiment(pair(), None, cfg, mode="bss")
    with pytest.raises(DomainError):
        run_clt_experiment(pair(), None, PathConfig(64, 0.5, 100))


def test_clt_core_small_run():
    p = pair(0.1, 0.2, 0.5)
    rep = run_clt_experiment(p, None, PathConfig(128, 1.0, 400, seed=1))
    assert rep.kind == "clt-core"
    assert [r["t"] for r in rep.per_t] == [0.25, 0.5, 1.0]
    assert rep.empirical_variance >= 0 and 0 <= rep.ks_statistic <= 1
    assert rep.theoretical_beta == c11(LimitSpec.from_pair(p)).beta
    d = rep.diagnostics
    assert d["independence_bound"] == pytest.approx(4 / math.sqrt(400))
    assert set(d) >= {"c11_K_used", "c11_tail_bound", "mu_n", "H", "finite_n_variance", "corr_stat_G1_T"}
    for r in rep.per_t:
        assert r["theoretical_variance"] == pytest.approx(r["t"] * rep.theoretical_beta)


def test_uncorrelated_beta_reduces():
    p = pair(0.1, 0.2, 0.0)
    rep = run_clt_experiment(p, None, PathConfig(64, 1.0, 100, seed=2))
    s = LimitSpec.from_pair(p)
    K = 10**6
    k = np.arange(1, K + 1)
    head = 1 + 2 * math.fsum(rho_theta(s, 1, 1, k) * rho_theta(s, 2, 2, k))
    # leading-order remainder of the series beyond K
    t1, t2 = s.theta_11, s.theta_22
    e = t1 + t2 - 4
    tail = 0.25 * t1 * (t1 - 1) * t2 * (t2 - 1) * (K + 0.5) ** (e + 1) / -(e + 1)
    assert rep.theoretical_beta == pytest.approx(head + 2 * tail, abs=1e-8)
    assert rep.theoretical_beta == c11(s).beta


def test_clt_bss_small_run():
    vol = VolatilitySpec.deterministic(lambda t: 1 + 0.5 * np.sin(2 * np.pi * t), lambda t: 1 + 0.25 * np.cos(2 * np.pi * t))
    rep = run_clt_experiment(pair(), vol, PathConfig(64, 1.0, 200, seed=3), mode="bss")
    assert rep.kind == "clt-bss"
    assert rep.config["volatility"]["kind"] == "deterministic"
    assert "corr_stat_G1_T" not in rep.diagnostics


def test_clt_bss_core_driven_mixed_normal():
    vol = VolatilitySpec.core_driven((1.0, 1.0), (0.3, 0.3), 0.02)
    rep = run_clt_experiment(pair(), vol, PathConfig(32, 1.0, 100, seed=4, oversample=2), mode="bss")
    z = rep.samples[1.0]
    assert z.shape == (100,) and np.all(np.isfinite(z))


def test_lln_experiment_accepts_wide_range():
    p = pair(0.3, 0.3, 0.5)
    rep = run_lln_experiment(p, None, PathConfig(64, 1.0, 50, seed=5), n_list=(64, 128))
    assert [r["n"] for r in rep.per_n] == [64, 128]
    assert all(r["median_abs_error"] >= 0 for r in rep.per_n)
    assert rep.per_n[0]["mean_target"] == pytest.approx(0.5)
    with pytest.raises(DomainError):
        run_clt_experiment(p, None, PathConfig(64, 1.0, 100))


def test_lln_zero_target():
    rep = run_lln_experiment(pair(rho=0.0), None, PathConfig(64, 1.0, 20, seed=6), n_list=(64,))
    assert rep.per_n[0]["mean_target"] == 0.0


def test_experiment_determinism_across_workers(tmp_path):
    p = pair()
    cfg1 = PathConfig(64, 1.0, 300, seed=9, workers=1)
    cfg3 = PathConfig(64, 1.0, 300, seed=9, workers=3)
    a = run_clt_experiment(p, None, cfg1)
    b = run_clt_experiment(p, None, cfg3)
    assert a.to_json() == b.to_json()
    fa = a.write(tmp_path / "a")
    fb = b.write(tmp_path / "b")
    for x, y in zip(fa, fb):
        assert open(x, "rb").read() == open(y, "rb").read()
    c = run_clt_experiment(p, None, PathConfig(64, 1.0, 300, seed=10))
    assert c.to_json() != a.to_json()


def test_report_files(tmp_path):
    rep = run_lln_experiment(pair(), None, PathConfig(32, 1.0, 10, seed=1), n_list=(32,))
    paths = rep.write(tmp_path)
    names = [p.split("/")[-1] for p in paths]
    assert names == ["lln.json", "lln_samples.csv"]
    text = open(paths[0]).read()
    body = json.loads("".join(ln for ln in text.splitlines(True) if not ln.startswith("#")))
    assert body["kind"] == "lln" and "runtime" not in body and body["version"]
    lines = open(paths[1]).read().splitlines()
    assert lines[2] == "path,n,estimate" and len(lines) == 3 + 10
    ttext = open(tmp_path / "lln_timing.json").read().splitlines()
    assert ttext[0].startswith("# bsscovar ")
    timing = json.loads(ttext[-1])
    assert timing["runtime_seconds"] >= 0


def test_report_json_handles_non_finite():
    r = ExperimentReport("x", {})
    assert "NaN" in r.to_json()
