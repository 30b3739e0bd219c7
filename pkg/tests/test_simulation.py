import math

import numpy as np
import pytest
from scipy import stats

from spectral_backtest import catalog as ct
from spectral_backtest import special_functions as sf
from spectral_backtest.errors import ConfigError, DomainError
from spectral_backtest.simulation import (
    DgpSpec,
    SimulationSpec,
    derive_stream,
    parse_dgp,
    preset_spec,
    reference_values,
    run_size_power,
    sample_arma_z,
    sample_batch,
    sample_losses,
    sample_pits,
    sample_pits_arma,
    sample_pits_iid,
    spec_from_dict,
)
from spectral_backtest.simulation import harness

ARMA = DgpSpec(None, 0.95, -0.85)
KS_CRIT_1PCT_1E5 = 1.62762 / math.sqrt(1e5)


# DGP specification


@pytest.mark.parametrize(
    "text,label",
    [
        ("Normal", "Normal/IID"),
        ("t5", "ScaledT(5)/IID"),
        ("ScaledT(3)/ARMA(0.95,-0.85)", "ScaledT(3)/ARMA(0.95,-0.85)"),
        ({"nu": 5, "ar": 0.5, "ma": 0.1}, "ScaledT(5)/ARMA(0.5,0.1)"),
    ],
)
def test_parse_dgp(text, label):
    assert parse_dgp(text).label == label


@pytest.mark.parametrize("bad", [{"nu": 2}, {"ar": 1.0, "ma": 0.0}, {"ar": 0.5}, "Cauchy"])
def test_bad_dgp(bad):
    with pytest.raises(DomainError):
        parse_dgp(bad)


def test_scaled_t_scale():
    assert DgpSpec(5).scale == pytest.approx(math.sqrt(3 / 5), rel=1e-15)


def test_rho1_formula():
    phi, theta = 0.95, -0.85
    assert ARMA.rho1() == pytest.approx((1 + phi * theta) * (phi + theta) / (1 + 2 * phi * theta + theta**2), rel=1e-15)
    assert ARMA.rho1() == pytest.approx(0.17907, abs=1e-5)


# iid sampling


def test_normal_pits_uniform_ks():
    passes = 0
    for i in range(100):
        p = sample_pits_iid(DgpSpec(), 100_000, derive_stream(7, i)).pit
        passes += stats.kstest(p, "uniform").statistic < KS_CRIT_1PCT_1E5
    assert passes >= 95


def test_scaled_t5_unit_variance():
    loss = sample_losses(DgpSpec(5), 1_000_000, derive_stream(1, 0))
    assert abs(loss.var() - 1.0) <= 0.01


def test_losses_and_pits_agree():
    dgp = DgpSpec(3)
    loss = sample_losses(dgp, 1000, derive_stream(2, 5))
    pit = sample_pits(dgp, 1000, derive_stream(2, 5)).pit
    assert np.array_equal(sf.std_normal_cdf(loss), pit)


@pytest.mark.parametrize("nu", [3, 5])
def test_scaled_t_pit_cdf(nu):
    # P(P <= u) = F_t(Phi^-1(u) / scale)
    p = sample_pits_iid(DgpSpec(nu), 200_000, derive_stream(3, nu)).pit
    for u in (0.5, 0.9, 0.99, 0.995):
        expect = stats.t.cdf(sf.std_normal_quantile(u) / math.sqrt((nu - 2) / nu), nu)
        se = math.sqrt(expect * (1 - expect) / p.size)
        assert abs(np.mean(p <= u) - expect) <= 4 * se
    expect3 = stats.t.cdf(sf.std_normal_quantile(0.99) * math.sqrt(3), 3)
    assert DgpSpec(3).scale == pytest.approx(1 / math.sqrt(3))
    assert 0.98 < expect3 < 0.995


def test_iid_rejects_arma():
    with pytest.raises(DomainError):
        sample_pits_iid(ARMA, 10, derive_stream(0, 0))
    with pytest.raises(DomainError):
        sample_pits_arma(DgpSpec(), 10, derive_stream(0, 0))


# ARMA sampling


def test_arma_pits_uniform_ks():
    # KS critical values assume independence; lag-100 autocorrelation is ~1e-3
    passes = 0
    for i in range(20):
        p = sample_pits_arma(ARMA, 1_000_000, derive_stream(11, i)).pit[::100]
        passes += stats.kstest(p, "uniform").pvalue > 0.01
    assert passes >= 19


@pytest.fixture(scope="module")
def long_arma_path():
    return sample_arma_z(ARMA, 1_000_000, derive_stream(5, 0))


def test_arma_stationary_moments(long_arma_path):
    z = long_arma_path
    assert abs(z.var() - 1.0) <= 0.005
    assert abs(z.mean()) <= 0.01


def test_arma_rho1_of_v_transform():
    p = sample_pits_arma(ARMA, 1_000_000, derive_stream(5, 0)).pit
    z = sf.std_normal_quantile(np.clip(np.abs(2 * p - 1), 1e-300, 1 - 1e-16))
    z = z - z.mean()
    rho1 = float(z[1:] @ z[:-1] / (z @ z))
    assert abs(rho1 - ARMA.rho1()) <= 0.01


def test_arma_v_transform_matches_path(long_arma_path):
    p = sample_pits_arma(ARMA, 1000, derive_stream(5, 0)).pit
    v = np.abs(2 * p - 1)
    assert np.allclose(v, sf.std_normal_cdf(long_arma_path[:1000]), atol=1e-15)


# streams


def test_stream_reproducible():
    a = sample_pits(DgpSpec(5), 500, derive_stream(9, 3)).pit
    b = sample_pits(DgpSpec(5), 500, derive_stream(9, 3)).pit
    assert np.array_equal(a, b)


def test_streams_uncorrelated():
    a = derive_stream(9, 0).random(100_000)
    b = derive_stream(9, 1).random(100_000)
    c = derive_stream(10, 0).random(100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.01


def test_negative_seed_rejected():
    with pytest.raises(DomainError):
        derive_stream(-1, 0)


@pytest.mark.parametrize("dgps", [("Normal", "t5", "t3"), ("Normal/ARMA(0.95,-0.85)", "t5/ARMA(0.95,-0.85)")])
def test_batch_equals_single_draws(dgps):
    specs = [parse_dgp(d) for d in dgps]
    batch = sample_batch(specs, 300, 4, 10, 14)
    for d in specs:
        for i in range(4):
            single = sample_pits(d, 300, derive_stream(4, 10 + i)).pit
            assert np.array_equal(batch[d][i], single)


def test_shorter_samples_are_prefixes():
    d = parse_dgp("t5")
    long = sample_batch([d], 750, 1, 0, 3)[d]
    short = sample_batch([d], 250, 1, 0, 3)[d]
    assert np.array_equal(long[:, :250], short)


# harness


def small_spec(**kw):
    base = dict(
        dgps=("Normal", "t5"),
        tests=(ct.TestConfig("BIN"), ct.TestConfig("ZU", "wide"), ct.TestConfig("PE3")),
        n=(250, 750),
        reps=300,
        seed=3,
        chunk=64,
    )
    base.update(kw)
    return SimulationSpec(**base)


def test_level_one_rejects_everything():
    tab = run_size_power(small_spec(level=1.0))
    assert all(r.estimate == 100.0 for r in tab.rows)


def test_reps_one_gives_zero_or_hundred():
    tab = run_size_power(small_spec(reps=1))
    assert all(r.estimate in (0.0, 100.0) for r in tab.rows)


def test_table_independent_of_chunking_and_order():
    spec = small_spec()
    ref = run_size_power(spec).to_csv()
    assert run_size_power(small_spec(chunk=7)).to_csv() == ref
    parts = [harness._run_chunk(spec, a, b) for a, b in reversed(harness._chunks(spec))]
    totals = np.sum(np.array(parts), axis=0)
    tab = run_size_power(spec)
    assert [(r.rejections, r.computed, r.n_failed) for r in tab.rows] == [tuple(t) for t in totals]


def test_powertable_outputs():
    tab = run_size_power(small_spec(reps=50))
    lines = tab.to_csv().splitlines()
    assert lines[0] == "dgp,test,window,cvt,n,estimate,se,n_failed"
    assert len(lines) == 1 + 2 * 3 * 2
    row = tab.lookup("ScaledT(5)/IID", "ZU", "wide", "None", 750)
    assert 0 <= row.estimate <= 100 and row.se >= 0
    assert '"rows"' in tab.to_json()


def test_failed_replications_reported():
    # EM1 with a single lag on short samples often has no tail events
    spec = SimulationSpec(("Normal",), (ct.TestConfig("ZU", cvt=ct.cvt_from_spec("EM1"), k=1),), 50, 200, 1)
    row = run_size_power(spec).rows[0]
    assert row.n_failed > 0 and row.computed + row.n_failed == 200


def test_all_failed_gives_na():
    spec = SimulationSpec(("Normal",), (ct.TestConfig("ZU", cvt=ct.cvt_from_spec("EM1"), k=1),), 3, 2, 0)
    tab = run_size_power(spec)
    assert tab.rows[0].estimate is None
    assert ",NA,NA," in tab.to_csv()


@pytest.mark.parametrize(
    "kw", [dict(reps=0), dict(level=0.0), dict(n=1), dict(seed=-1), dict(chunk=0), dict(tests=())]
)
def test_spec_validation(kw):
    with pytest.raises(ConfigError):
        small_spec(**kw)


def test_spec_from_dict_expands_grid():
    spec = spec_from_dict(
        {
            "dgps": ["Normal", "t5/ARMA(0.95,-0.85)"],
            "windows": ["narrow", "wide"],
            "tests": ["BIN", {"test": "ZU", "cvts": [None, "MD4"], "k": 4}],
            "n": 500,
        },
        reps=10,
        seed=2,
    )
    assert len(spec.tests) == 2 + 4
    assert spec.n == (500,) and spec.reps == 10 and spec.seed == 2


def test_presets_cover_reference_cells():
    for name in ("2", "4", "S1", "S2", "S3", "S4", "S5"):
        spec = preset_spec(name, reps=1)
        ref = reference_values(name)
        keys = {(d.label, t.label, t.window_label, t.cvt_label, n) for d, t, n in spec.cells()}
        assert set(ref) <= keys
    assert len(reference_values("2")) == 60


def test_pe3_power_t5_narrow():
    spec = SimulationSpec(("t5",), (ct.TestConfig("PE3", "narrow"),), 750, 10_000, seed=4, chunk=1000)
    row = run_size_power(spec).rows[0]
    assert abs(row.estimate - 40.3) <= 1.5
