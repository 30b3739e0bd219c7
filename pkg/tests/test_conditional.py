import math
import warnings
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_backtest import catalog as ct
from spectral_backtest import conditional as cd
from spectral_backtest import kernels as kn
from spectral_backtest import unconditional as uc
from spectral_backtest.errors import DegenerateSampleWarning, DomainError, SingularH
from spectral_backtest.simulation import SimulationSpec, reference_values, run_size_power

NARROW, WIDE = kn.NARROW, kn.WIDE
CVTS = [cd.make_cvt(n) for n in ("EM1", "EM2", "MD4", "MDhalf")] + [cd.make_cvt("powerV", exponent=1.7)]
KERNELS = [kn.dirac_kernel(0.99)] + [kn.builtin_kernel(n, w, True) for n in kn.BETA_FAMILY for w in (NARROW, WIDE)]


def sample(seed, n=750, power=0.5):
    return np.random.default_rng(seed).random(n) ** power


# CVTs


def test_cvt_examples():
    md4, em2, half, em1 = (cd.make_cvt(n) for n in ("MD4", "EM2", "MDhalf", "EM1"))
    assert cd.apply_cvt(md4, 0.5) == 0.0 and cd.apply_cvt(md4, 1.0) == 1.0
    assert cd.apply_cvt(em2, 0.005) == 1.0 and cd.apply_cvt(em2, 0.5) == 0.0
    assert cd.apply_cvt(half, 0.75) == pytest.approx(math.sqrt(0.5), rel=1e-15)
    assert cd.apply_cvt(em1, 0.99) == 1.0 and cd.apply_cvt(em1, 0.9899) == 0.0


@given(st.sampled_from(CVTS), st.floats(0, 1))
def test_cvt_bounded(cvt, p):
    assert 0.0 <= cd.apply_cvt(cvt, p) <= 1.0


def test_cvt_configurable_threshold():
    assert cd.make_cvt("EM1", threshold=0.95).threshold == 0.95
    with pytest.raises(DomainError):
        cd.make_cvt("EM1", threshold=1.5)
    with pytest.raises(DomainError):
        cd.make_cvt("XYZ")


# regressor matrix


def test_regressors_direct_construction():
    p = sample(1, 50)
    X, t = cd.build_regressor_matrix(cd.make_cvt("MD4"), 3, p)
    assert np.array_equal(t, np.arange(3, 50))
    for row, ti in zip(X, t):
        assert row[0] == 1.0
        assert np.allclose(row[1:], np.abs(2 * p[ti - np.arange(1, 4)] - 1) ** 4, rtol=1e-15)


def test_regressors_single_missing_uses_imputed_lags():
    p = sample(2, 40)
    miss = 10
    q = p.copy()
    q[miss] = np.nan
    imputed = np.full(40, np.nan)
    imputed[miss] = 0.999
    cvt = cd.make_cvt("EM1")
    X, t = cd.build_regressor_matrix(cvt, 3, q, imputed)
    assert miss not in t
    for row, ti in zip(X, t):
        for lag in range(1, 4):
            src = ti - lag
            expect = 1.0 if src == miss else float(p[src] >= 0.99)
            assert row[lag] == expect


@pytest.mark.filterwarnings("ignore::spectral_backtest.errors.DegenerateSampleWarning")
def test_regressors_drop_rows_without_imputation():
    p = sample(3, 40)
    q = p.copy()
    q[10] = np.nan
    X, t = cd.build_regressor_matrix(cd.make_cvt("MD4"), 2, q)
    # row 10 (missing dependent) and rows 11, 12 (missing lag) are dropped
    assert set(range(10, 13)).isdisjoint(t)
    assert t.size == 38 - 3
    r = cd.md_test(kn.dirac_kernel(0.99), cd.make_cvt("MD4"), 2, q)
    assert r.n_used == t.size


def test_regressors_misaligned_imputation():
    with pytest.raises(DomainError):
        cd.build_regressor_matrix(cd.make_cvt("MD4"), 1, sample(0, 10), np.zeros(9))


# MD statistic


def summation_form(kernel, cvt, k, p):
    ms = kn.cov_matrix([kernel])
    mu, s2 = ms.mu[0], ms.cov[0, 0]
    rows = []
    for t in range(k, p.size):
        h = np.array([1.0] + [cd.apply_cvt(cvt, p[t - j]) for j in range(1, k + 1)])
        rows.append((h, kernel.G(p[t]) - mu))
    n = len(rows)
    ybar = sum(h * w for h, w in rows) / n
    H = sum(np.outer(h, h) for h, _ in rows) / n
    return n * ybar @ np.linalg.solve(s2 * H, ybar)


def matrix_form(kernel, cvt, k, p):
    ms = kn.cov_matrix([kernel])
    X, t = cd.build_regressor_matrix(cvt, k, p)
    w = kernel.G(p[t]) - ms.mu[0]
    return float(w @ X @ np.linalg.solve(X.T @ X, X.T @ w)) / ms.cov[0, 0]


@pytest.mark.parametrize("cvt", CVTS, ids=lambda c: c.label)
@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: f"{k.label}{k.support}")
def test_md_equals_matrix_and_summation_forms(kernel, cvt):
    p = sample(zlib.crc32(f"{kernel.label}{kernel.support}{cvt.label}".encode()), 400, 0.3)
    r = cd.md_test(kernel, cvt, 4, p)
    assert r.df == 5
    assert r.statistic == pytest.approx(matrix_form(kernel, cvt, 4, p), rel=1e-9)
    assert r.statistic == pytest.approx(summation_form(kernel, cvt, 4, p), rel=1e-9)


@settings(max_examples=40)
@given(st.sampled_from(KERNELS), st.sampled_from(CVTS), st.integers(0, 10**6))
def test_md_k0_is_z_squared(kernel, cvt, seed):
    p = sample(seed, 300, 0.4)
    z = uc.mono_z_test(kernel, p).statistic
    assert abs(cd.md_test(kernel, cvt, 0, p).statistic - z * z) <= 1e-10 * max(1.0, z * z)


@settings(max_examples=20)
@given(st.sampled_from(KERNELS[1:]), st.sampled_from(CVTS[2:]), st.floats(0.01, 100))
def test_md_scale_invariant(kernel, cvt, c):
    p = sample(7, 300, 0.4)
    a = cd.md_test(kernel, cvt, 3, p).statistic
    b = cd.md_test(kernel.scaled(c), cvt, 3, p).statistic
    assert abs(a - b) <= 1e-10 * max(1.0, a)


@pytest.mark.filterwarnings("ignore::spectral_backtest.errors.DegenerateSampleWarning")
def test_md_singular_h_without_tail_events():
    p = np.random.default_rng(0).random(750) * 0.98
    with pytest.raises(SingularH, match="no tail events"):
        cd.md_test(kn.builtin_kernel("ZU", NARROW, True), cd.make_cvt("EM1"), 4, p)


def test_md_degenerate_sample():
    p = np.random.default_rng(0).random(200) * 0.9
    with pytest.warns(DegenerateSampleWarning):
        r = cd.md_test(kn.builtin_kernel("ZU", NARROW, True), cd.make_cvt("MD4"), 2, p)
    assert r.df == 3 and r.warnings


def test_md_gw_estimator():
    p = sample(5, 750, 0.3)
    k, cvt = kn.builtin_kernel("ZU", WIDE, True), cd.make_cvt("MD4")
    a = cd.md_test(k, cvt, 4, p)
    b = cd.md_test(k, cvt, 4, p, estimator="gw")
    assert a.statistic != b.statistic and b.statistic > 0
    with pytest.raises(DomainError):
        cd.md_test(k, cvt, 4, p, estimator="hac")


def test_md_too_short():
    with pytest.raises(DomainError):
        cd.md_test(kn.dirac_kernel(0.99), cd.make_cvt("MD4"), 4, sample(0, 5))


# bispectral


def zll():
    return [kn.builtin_kernel("ZL-", WIDE, True), kn.builtin_kernel("ZL+", WIDE, True)]


@pytest.mark.parametrize("seed", range(5))
def test_bispectral_k0_is_unconditional(seed):
    p = sample(seed, 750, 0.3)
    md4 = cd.make_cvt("MD4")
    a = cd.bispectral_md_test(zll(), (md4, md4), 0, 0, p).statistic
    b = uc.multi_z_test(zll(), p).statistic
    assert abs(a - b) <= 1e-10 * max(1.0, b)


def test_hadamard_block_structure():
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    A = cd.hadamard_weights(cov, 3, 1)
    assert A.shape == (6, 6)
    assert np.all(A[:4, :4] == 2.0) and np.all(A[4:, 4:] == 1.0)
    assert np.all(A[:4, 4:] == 0.3) and np.all(A[4:, :4] == 0.3)


def test_bispectral_summation_form():
    p = sample(8, 600, 0.3)
    ks = zll()
    ms = kn.cov_matrix(ks)
    cvt = cd.make_cvt("MD4")
    k1, k2 = 4, 0
    rows = []
    for t in range(4, p.size):
        h1 = np.array([1.0] + [cd.apply_cvt(cvt, p[t - j]) for j in range(1, k1 + 1)])
        h2 = np.array([1.0])
        w = np.array([k.G(p[t]) for k in ks]) - ms.mu
        rows.append((np.concatenate([h1, h2]), np.concatenate([h1 * w[0], h2 * w[1]])))
    n = len(rows)
    ybar = sum(y for _, y in rows) / n
    H = sum(np.outer(h, h) for h, _ in rows) / n
    S = cd.hadamard_weights(ms.cov, k1, k2) * H
    expect = n * ybar @ np.linalg.solve(S, ybar)
    r = cd.bispectral_md_test(ks, (cvt, cvt), k1, k2, p)
    assert r.df == k1 + k2 + 2
    assert r.statistic == pytest.approx(expect, rel=1e-9)


def test_bispectral_pns_k0_is_score_test():
    p = sample(4, 750, 0.2)
    k1, k2, _ = kn.pns_kernel(*NARROW)
    md4 = cd.make_cvt("MD4")
    r = cd.bispectral_md_test((k1, k2), (md4, md4), 0, 0, p, moments=kn.pns_moments(*NARROW))
    assert r.statistic == pytest.approx(uc.pns_score_test(*NARROW, p).statistic, rel=1e-9)


def test_bispectral_singular_h():
    p = np.random.default_rng(1).random(500) * 0.98
    em1 = cd.make_cvt("EM1")
    with pytest.raises(SingularH):
        cd.bispectral_md_test(zll(), (em1, em1), 4, 0, p)


# size under the null, conditional reference values (+-1pp)


@pytest.fixture(scope="module")
def md_size_table():
    configs = [
        ct.TestConfig(t, w, cd.make_cvt(c), k=4, k2=0)
        for c in ("MD4", "MDhalf")
        for w in ("narrow", "wide")
        for t in ("BIN", "ZU", "ZL+", "ZL-", "ZLL", "PNS")
    ]
    spec = SimulationSpec(("Normal",), tuple(configs), 750, 10_000, seed=2, chunk=500)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_size_power(spec)


def test_md_size_matches_reference(md_size_table):
    ref = reference_values("S4")
    bad = []
    for row in md_size_table.rows:
        v = ref[row.key()]
        if abs(row.estimate - v) > 1.0:
            bad.append((row.key(), row.estimate, v))
    assert not bad, bad
