import math

import numpy as np
import pytest

import _oracles as orc
from bsscovar import (
    DomainError,
    GammaKernel,
    KernelPair,
    MatrixSizeError,
    build_increment_cov,
    flip_lag,
    h_gamma,
    r_n,
    rbar,
)
from bsscovar.asymptotics import LimitSpec, rho_theta
from bsscovar.covariance import level_cross, r_n_lags, taus

# mpmath oracles (see _oracles.r_n)
R12_N16_K2 = 0.0028062180393321374517
R11_N1024_K3 = 0.13717075512547620525
# lag 1 with a negative exponent, where g_b(y) enters the second difference
R12_NEG_N64_K1 = 0.0988424974749556745955
R21_NEG_N64_K1 = -0.131986404533162034455
R11_NEG_N64_K1 = -0.340707208924268074024
R11_NEG45_N16_K1 = -0.46462794260200870742

# decay constants fitted once at n = 1024 over 2 <= k <= 64 and frozen
DECAY_C = {
    (0.1, 0.1): {(1, 1): 0.07703, (1, 2): 0.03852, (2, 1): 0.03852, (2, 2): 0.07703},
    (0.1, 0.2): {(1, 1): 0.07703, (1, 2): 0.08827, (2, 1): 0.04418, (2, 2): 0.20907},
    (-0.2, 0.1): {(1, 1): 0.05148, (1, 2): 0.02153, (2, 1): 0.04120, (2, 2): 0.07703},
}


def pair(d1=0.1, d2=0.2, l1=1.0, l2=1.0, rho=0.5):
    return KernelPair(GammaKernel(d1, l1), GammaKernel(d2, l2), rho)


def test_unit_diagonal_without_quadrature():
    assert r_n(pair(), 64, 1, 1, 0) == 1.0
    assert r_n(pair(), 64, 2, 2, 0) == 1.0


@pytest.mark.parametrize("k", [0, 1, 5])
def test_zero_rho_cross(k):
    p = pair(rho=0.0)
    assert r_n(p, 256, 1, 2, k) == 0.0
    assert r_n(p, 256, 2, 1, k) == 0.0


def test_against_mpmath_oracle():
    p = KernelPair(GammaKernel(0.1, 1.0), GammaKernel(0.2, 2.0), 0.5)
    assert r_n(p, 16, 1, 2, 2) == pytest.approx(R12_N16_K2, rel=1e-10)
    k = GammaKernel(0.2, 1.0)
    assert r_n(KernelPair(k, k, 0.5), 1024, 1, 1, 3) == pytest.approx(R11_N1024_K3, rel=1e-10)


def test_lag_one_with_negative_exponent():
    p = KernelPair(GammaKernel(-0.3, 1.0), GammaKernel(0.2, 2.0), 0.5)
    assert r_n(p, 64, 1, 2, 1) == pytest.approx(R12_NEG_N64_K1, rel=1e-10)
    assert r_n(p, 64, 2, 1, 1) == pytest.approx(R21_NEG_N64_K1, rel=1e-10)
    assert r_n(p, 64, 1, 1, 1) == pytest.approx(R11_NEG_N64_K1, rel=1e-10)
    k = GammaKernel(-0.45, 1.0)
    assert r_n(KernelPair(k, k, 0.5), 16, 1, 1, 1) == pytest.approx(R11_NEG45_N16_K1, rel=1e-10)


@pytest.mark.parametrize("a,b", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_second_difference_identity_at_coarse_grid(a, b):
    # at n = 8 the variogram second difference has no cancellation problem
    p = pair(0.2, -0.1, 1.0, 2.0, 0.5)
    n = 8
    ta, tb = taus(p, n)
    tau = {1: ta, 2: tb}
    for k in (1, 2, 4):
        R = [rbar(p, a, b, (k + j) / n) for j in (-1, 0, 1)]
        direct = (R[0] - 2 * R[1] + R[2]) / (2 * tau[a] * tau[b])
        assert r_n(p, n, a, b, k) == pytest.approx(direct, rel=1e-8, abs=1e-12)


def test_cross_zero_lag_is_c_ratio():
    p = pair(0.2, -0.1, 1.0, 2.0, 0.5)
    from bsscovar import c_of_x

    t1, t2 = taus(p, 32)
    assert r_n(p, 32, 1, 2, 0) == pytest.approx(0.5 * c_of_x(p, 1 / 32) / (t1 * t2), rel=1e-14)
    assert r_n(p, 32, 1, 2, 0) == r_n(p, 32, 2, 1, 0)


def test_zero_lag_limit_is_rho_h():
    p = pair(0.1, 0.1, 1.0, 1.0, 0.5)
    assert r_n(p, 2**16, 1, 2, 0) == pytest.approx(0.5 * h_gamma(p), rel=1e-2)


def test_fixed_lag_limit():
    k = GammaKernel(0.2, 1.0)
    p = KernelPair(k, k, 0.5)
    spec = LimitSpec.from_pair(p)
    assert r_n(p, 2**16, 1, 1, 3) == pytest.approx(rho_theta(spec, 1, 1, 3), rel=1e-2)


def test_directional_cross_limit():
    # r_12 and r_21 converge to limits with different constants
    p = pair(0.1, 0.2, 1.0, 1.0, 0.5)
    spec = LimitSpec.from_pair(p)
    for a, b in ((1, 2), (2, 1)):
        assert r_n(p, 2**18, a, b, 1) == pytest.approx(rho_theta(spec, a, b, 1), rel=1e-2)
    assert abs(rho_theta(spec, 1, 2, 1) - rho_theta(spec, 2, 1, 1)) > 1e-2


def test_flip_lag():
    p = pair(0.1, 0.2, 1.0, 2.0, 0.5)
    assert flip_lag(p, 64, 1, 2, -2) == r_n(p, 64, 2, 1, 2)
    assert flip_lag(p, 64, 1, 1, -3) == r_n(p, 64, 1, 1, 3)
    assert flip_lag(pair(rho=0.0), 64, 1, 2, -2) == 0.0
    with pytest.raises(DomainError):
        flip_lag(p, 64, 1, 2, 1)
    with pytest.raises(DomainError):
        r_n(p, 64, 1, 2, -1)


def test_vectorised_matches_scalar():
    p = pair(0.1, -0.2, 1.0, 2.0, -0.4)
    ks = np.arange(6)
    for a, b in ((1, 2), (2, 1), (2, 2)):
        v = r_n_lags(p, 100, a, b, ks)
        assert np.array_equal(v, [r_n(p, 100, a, b, int(k)) for k in ks]) or np.allclose(
            v, [r_n(p, 100, a, b, int(k)) for k in ks], rtol=1e-12, atol=0
        )


def test_matrix_base_case():
    p = pair(0.1, 0.2, 1.0, 1.0, 0.5)
    m = build_increment_cov(p, 64, 1).matrix
    r0 = r_n(p, 64, 1, 2, 0)
    assert np.array_equal(m, np.array([[1.0, r0], [r0, 1.0]]))


def test_matrix_block_diagonal_without_correlation():
    m = build_increment_cov(pair(rho=0.0), 64, 8).matrix
    assert np.all(m[:8, 8:] == 0.0) and np.all(m[8:, :8] == 0.0)


def test_matrix_properties():
    p = pair(0.1, 0.1, 1.0, 1.0, 0.5)
    cov = build_increment_cov(p, 64, 32)
    m = cov.matrix
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) == 1.0)
    assert cov.min_eigenvalue() >= -1e-10
    assert not m.flags.writeable


def test_matrix_entries():
    p = pair(0.1, 0.2, 1.0, 2.0, 0.5)
    N = 6
    m = build_increment_cov(p, 64, N).matrix
    for i in range(N):
        for j in range(N):
            k = j - i
            exp12 = r_n(p, 64, 1, 2, k) if k >= 0 else flip_lag(p, 64, 1, 2, k)
            assert m[i, N + j] == pytest.approx(exp12, rel=1e-13, abs=1e-16)
            exp11 = r_n(p, 64, 1, 1, abs(k))
            assert m[i, j] == pytest.approx(exp11, rel=1e-13, abs=1e-16)


def test_levels_augmentation():
    p = pair(0.2, -0.1, 1.0, 2.0, 0.5)
    n, N = 16, 4
    cov = build_increment_cov(p, n, N, with_levels=True)
    m = cov.matrix
    assert m.shape == (2 * N + 2,) * 2
    assert m[2 * N, 2 * N] == pytest.approx(p.k1.sq_norm(), rel=1e-15)
    assert m[2 * N, 2 * N + 1] == pytest.approx(0.5 * p.k1.inner(p.k2), rel=1e-15)
    # Cov(G^a_0, G^b_t) = rho_ab phi_ab(t) with phi from the oracle
    d = {1: (0.2, 1.0), 2: (-0.1, 2.0)}
    for a in (1, 2):
        for b in (1, 2):
            tb = cov.tau[b - 1]
            rab = p.rho_ij(a, b)
            for i in (1, 3):
                ph = lambda t: float(orc.phi(*d[a], *d[b], t)) if t > 0 else float(orc.inner(*d[a], *d[b]))
                exp = rab * (ph(i / n) - ph((i - 1) / n)) / tb
                got = m[2 * N + a - 1, (b - 1) * N + i - 1]
                assert got == pytest.approx(exp, rel=1e-9)
    assert np.allclose(level_cross(p, n, 1, 2, N, tau_b=cov.tau[1]), m[2 * N, N : 2 * N], rtol=1e-14)
    assert np.linalg.eigvalsh(m)[0] > -1e-10


def test_cache_returns_same_object():
    p = pair(0.1, 0.2, 1.0, 1.0, 0.3)
    assert build_increment_cov(p, 32, 4) is build_increment_cov(p, 32, 4)


def test_size_cap():
    with pytest.raises(MatrixSizeError):
        build_increment_cov(pair(), 1024, 5000)


def test_csv_export(tmp_path):
    cov = build_increment_cov(pair(), 32, 3)
    f = tmp_path / "m.csv"
    cov.to_csv(f, header=["test"])
    lines = f.read_text().splitlines()
    assert lines[0] == "# test"
    back = np.loadtxt(f, delimiter=",", comments="#")
    assert np.array_equal(back, cov.matrix)


@pytest.mark.parametrize("deltas", list(DECAY_C))
def test_decay_bound(deltas):
    p = pair(*deltas, 1.0, 1.0, 0.5)
    k = np.arange(2, 65)
    for n in (1024, 4096, 16384):
        for (a, b), C in DECAY_C[deltas].items():
            da, db = p.kernel(a).delta, p.kernel(b).delta
            eps = (0.5 - da - db) / 2
            r = np.abs(r_n_lags(p, n, a, b, k))
            assert np.all(r <= 1.1 * C * (k - 1.0) ** (da + db + eps - 1))


@pytest.mark.parametrize("deltas", [(0.1, 0.1), (0.1, 0.2)])
@pytest.mark.parametrize("lams", [(1.0, 1.0), (1.0, 2.0)])
def test_convergence_monotone(deltas, lams):
    p = pair(*deltas, *lams, 0.5)
    spec = LimitSpec.from_pair(p)
    ks = np.arange(9)
    for a in (1, 2):
        for b in (1, 2):
            lim = rho_theta(spec, a, b, ks)
            errs = [np.abs(r_n_lags(p, n, a, b, ks) - lim) for n in (2**10, 2**12, 2**14)]
            mask = errs[0] > 1e-9
            assert np.all(errs[1][mask] < errs[0][mask])
            assert np.all(errs[2][mask] < errs[1][mask])


def test_convergence_with_sign_change():
    # with a negative exponent sum the cross error r_12(2) - limit changes
    # sign between n = 2^10 and 2^14, so it is not monotone in absolute value;
    # it still vanishes
    p = pair(-0.2, 0.1, 1.0, 2.0, 0.5)
    spec = LimitSpec.from_pair(p)
    ks = np.arange(9)
    signed = {n: r_n_lags(p, n, 1, 2, ks) - rho_theta(spec, 1, 2, ks) for n in (2**10, 2**14, 2**16)}
    assert signed[2**10][2] < 0 < signed[2**14][2]
    for a in (1, 2):
        for b in (1, 2):
            lim = rho_theta(spec, a, b, ks)
            e10 = np.abs(r_n_lags(p, 2**10, a, b, ks) - lim)
            e16 = np.abs(r_n_lags(p, 2**16, a, b, ks) - lim)
            mask = e10 > 1e-9
            assert np.all(e16[mask] < e10[mask])
            assert np.all(e16 < 2e-3)
