"""Acceptance criteria; each test carries ``@pytest.mark.acceptance(n)``.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import math
import warnings

import mpmath as mp
import numpy as np
import pytest

import oracles as orc
import synthetic as syn
from spectral_backtest import catalog as ct
from spectral_backtest import cli
from spectral_backtest import conditional as cd
from spectral_backtest import ingestion as ig
from spectral_backtest import kernels as kn
from spectral_backtest import special_functions as sf
from spectral_backtest import unconditional as uc
from spectral_backtest.series import SPURIOUS
from spectral_backtest.simulation import (
    REFERENCE_REPS,
    SimulationSpec,
    preset_spec,
    reference_values,
    run_size_power,
)

REPS = 10_000
SEED = 1
NARROW, WIDE = kn.NARROW, kn.WIDE
BUILTINS = [kn.builtin_kernel(n, w, norm) for n in kn.BETA_FAMILY for w in (NARROW, WIDE) for norm in (False, True)]
BUILTINS += [kn.dirac_kernel(0.99)]
BUILTINS += [kn.discrete_kernel(kn.discrete_levels(w, m), None, f"ZU{m}") for w in (NARROW, WIDE) for m in (3, 5)]
BUILTINS += [kn.berkowitz_kernel(*w) for w in (NARROW, WIDE)]
BUILTINS += [k for w in (NARROW, WIDE) for k in kn.pns_kernel(*w)[:2]]


def run_quiet(spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_size_power(spec)


def combined_se(row, ref):
    return math.sqrt(row.se**2 + ref * (100 - ref) / REFERENCE_REPS)


# 1. Table 2


@pytest.fixture(scope="module")
def table2():
    return run_quiet(preset_spec("2", reps=REPS, seed=SEED, chunk=500))


@pytest.mark.acceptance(1)
def test_table2_all_cells_within_three_se(table2, acceptance_note):
    ref = reference_values("2")
    worst, bad = 0.0, []
    for key, v in ref.items():
        row = table2.lookup(*key)
        dev = abs(row.estimate - v) / combined_se(row, v)
        worst = max(worst, dev)
        if dev > 3:
            bad.append((key, row.estimate, v))
    acceptance_note(f"{len(ref) - len(bad)}/{len(ref)} cells within 3 SE, max {worst:.2f} SE")
    assert len(ref) == 60 and not bad, bad


@pytest.mark.acceptance(1)
@pytest.mark.parametrize(
    "key,target,tol",
    [
        (("Normal/IID", "BIN", "narrow", "None", 750), 6.1, 0.7),
        (("ScaledT(5)/IID", "ZU", "narrow", "None", 750), 33.8, 1.5),
        (("ScaledT(3)/IID", "PNS", "wide", "None", 750), 93.1, 1.0),
        (("ScaledT(3)/IID", "ZLL", "wide", "None", 750), 85.8, 1.5),
    ],
    ids=["BIN-Normal", "ZU-narrow-t5", "PNS-wide-t3", "ZLL-wide-t3"],
)
def test_table2_spot_cells(table2, key, target, tol, acceptance_note):
    est = table2.lookup(*key).estimate
    acceptance_note(f"{key[1]}/{key[2]}/{key[0].split('/')[0]} {est:.2f} (ref {target})")
    assert abs(est - target) <= tol


# 2. LR comparison


@pytest.mark.acceptance(2)
@pytest.mark.parametrize(
    "dgp,test,window,target,tol",
    [("Normal", "LR1", "narrow", 4.1, 0.7), ("Normal", "LR3", "narrow", 8.2, 0.9), ("t3", "LRB", "wide", 95.0, 1.0)],
    ids=["LR1-Normal", "LR3-narrow-Normal", "LRB-wide-t3"],
)
def test_lr_extract(dgp, test, window, target, tol, acceptance_note):
    spec = SimulationSpec((dgp,), (ct.TestConfig(test, window),), 750, REPS, SEED, chunk=500)
    est = run_quiet(spec).rows[0].estimate
    acceptance_note(f"{test}/{window}/{dgp} {est:.2f} (ref {target})")
    assert abs(est - target) <= tol


# 3. conditional extract


@pytest.fixture(scope="module")
def table4():
    return run_quiet(preset_spec("4", reps=REPS, seed=SEED, chunk=500))


@pytest.mark.acceptance(3)
@pytest.mark.parametrize(
    "key,target,tol",
    [
        (("Normal/IID", "ZU", "narrow", "None", 750), 4.8, 0.7),
        (("Normal/ARMA(0.95,-0.85)", "ZU", "narrow", "MD4(k=4)", 750), 32.6, 1.6),
        (("ScaledT(5)/ARMA(0.95,-0.85)", "ZU", "narrow", "MD4(k=4)", 750), 60.7, 1.6),
        (("Normal/IID", "ZU", "narrow", "EM1(k=4)", 750), 14.4, 1.2),
    ],
    ids=["Normal-None", "Normal-ARMA-MD4", "t5-ARMA-MD4", "Normal-EM1-size"],
)
def test_table4_extract(table4, key, target, tol, acceptance_note):
    est = table4.lookup(*key).estimate
    acceptance_note(f"{key[0].split('/')[0]}/{key[3]} {est:.2f} (ref {target})")
    assert abs(est - target) <= tol


# 4. algebraic identities


def datasets(count, n=750, base=1000):
    for s in range(count):
        rng = np.random.default_rng(base + s)
        yield rng.random(n) ** rng.uniform(0.1, 1.0)


@pytest.mark.acceptance(4)
def test_pearson_equals_indicator_multi_z(acceptance_note):
    worst = 0.0
    for i, p in enumerate(datasets(100)):
        levels = kn.discrete_levels(NARROW if i % 2 else WIDE, 3 if i % 3 else 5)
        a = uc.pearson_multinomial_test(levels, p).statistic
        b = uc.multi_z_test(kn.indicator_kernels(levels), p).statistic
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    acceptance_note(f"Pearson vs multi-Z max rel diff {worst:.1e}")
    assert worst <= 1e-9


def md_matrix_form(kernel, cvt, k, p):
    ms = kn.cov_matrix([kernel])
    X, t = cd.build_regressor_matrix(cvt, k, p)
    w = kernel.G(p[t]) - ms.mu[0]
    return float(w @ X @ np.linalg.solve(X.T @ X, X.T @ w)) / ms.cov[0, 0]


def md_summation_form(kernel, cvt, k, p):
    ms = kn.cov_matrix([kernel])
    n = p.size - k
    H = np.zeros((k + 1, k + 1))
    y = np.zeros(k + 1)
    for t in range(k, p.size):
        h = np.array([1.0] + [cd.apply_cvt(cvt, p[t - j]) for j in range(1, k + 1)])
        H += np.outer(h, h)
        y += h * (kernel.G(p[t]) - ms.mu[0])
    H /= n
    y /= n
    return n * y @ np.linalg.solve(ms.cov[0, 0] * H, y)


@pytest.mark.acceptance(4)
def test_md_matrix_equals_summation_form(acceptance_note):
    cvts = [cd.make_cvt(c) for c in ("EM1", "EM2", "MD4", "MDhalf")]
    kernels = [kn.builtin_kernel(n, w, True) for n in ("ZU", "ZL+", "ZE") for w in (NARROW, WIDE)]
    worst = 0.0
    for i, p in enumerate(datasets(24, n=500, base=2000)):
        kernel, cvt = kernels[i % len(kernels)], cvts[i % len(cvts)]
        stat = cd.md_test(kernel, cvt, 4, p).statistic
        for other in (md_matrix_form(kernel, cvt, 4, p), md_summation_form(kernel, cvt, 4, p)):
            worst = max(worst, abs(stat - other) / max(1.0, abs(other)))
    acceptance_note(f"MD matrix/summation max rel diff {worst:.1e}")
    assert worst <= 1e-9


@pytest.mark.acceptance(4)
def test_k0_conditional_equals_unconditional(acceptance_note):
    md4 = cd.make_cvt("MD4")
    zll = [kn.builtin_kernel("ZL-", WIDE, True), kn.builtin_kernel("ZL+", WIDE, True)]
    worst = 0.0
    for i, p in enumerate(datasets(100, base=3000)):
        kernel = kn.builtin_kernel(("ZU", "ZA", "ZE", "ZL+", "ZL-")[i % 5], NARROW if i % 2 else WIDE, True)
        z = uc.mono_z_test(kernel, p).statistic
        worst = max(worst, abs(cd.md_test(kernel, md4, 0, p).statistic - z * z) / max(1.0, z * z))
        b = uc.multi_z_test(zll, p).statistic
        worst = max(worst, abs(cd.bispectral_md_test(zll, (md4, md4), 0, 0, p).statistic - b) / max(1.0, b))
    acceptance_note(f"k=0 max rel diff {worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.acceptance(4)
def test_pns_score_equals_bispectral_z(acceptance_note):
    worst = 0.0
    for i, p in enumerate(datasets(100, base=4000)):
        window = NARROW if i % 2 else WIDE
        k1, k2, mu = kn.pns_kernel(*window)
        moments = kn.moment_set(mu, kn.pns_fisher_information(*window))
        a = uc.pns_score_test(*window, p).statistic
        b = uc.multi_z_test((k1, k2), p, moments=moments).statistic
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    acceptance_note(f"PNS score vs bispectral Z max rel diff {worst:.1e}")
    assert worst <= 1e-8


# 5. moment oracles


@pytest.mark.acceptance(5)
def test_builtin_moments_vs_quadrature(acceptance_note):
    worst = 0.0
    for k in BUILTINS:
        ms = kn.cov_matrix([k])
        worst = max(worst, abs(ms.mu[0] - float(orc.kernel_moment(k, 1))))
        worst = max(worst, abs(ms.cross[0, 0] - float(orc.kernel_moment(k, 2))))
    acceptance_note(f"{len(BUILTINS)} kernels, max abs diff {worst:.1e}")
    assert worst <= 1e-8


@pytest.mark.acceptance(5)
def test_beta_recurrence(acceptance_note):
    rng = np.random.default_rng(5)
    u = np.sort(np.concatenate([rng.uniform(0.9, 1.0, 2000), NARROW, WIDE]))
    worst = 0.0
    for a, b in rng.uniform(0.2, 8.0, (20, 2)):
        for w in (NARROW, WIDE):
            g = lambda x, y: kn.beta_kernel(x, y, w, normalized=True).G(u)
            worst = max(worst, float(np.max(np.abs((a + b) * g(a, b) - a * g(a + 1, b) - b * g(a, b + 1)))))
    acceptance_note(f"recurrence max abs diff {worst:.1e}")
    assert worst <= 1e-12


@pytest.mark.acceptance(5)
def test_beta_cross_moment_vs_quadrature(acceptance_note):
    rng = np.random.default_rng(6)
    worst = 0.0
    with mp.workdps(30):
        for a1, b1, a2, b2 in rng.uniform(0.3, 6.0, (20, 4)):
            ref = float(orc.beta_cross(a1, b1, a2, b2))
            worst = max(worst, abs(kn.beta_cross_moment(a1, b1, a2, b2) - ref))
    acceptance_note(f"20 parameter sets, max abs diff {worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.acceptance(5)
@pytest.mark.parametrize("window", [NARROW, WIDE], ids=["narrow", "wide"])
def test_fisher_vs_monte_carlo(window, acceptance_note):
    p = np.random.default_rng(0).random(1_000_000)
    scores = uc.pns_scores(p, *window)
    mc = scores.T @ scores / p.size
    fisher = kn.pns_fisher_information(*window)
    worst = float(np.max(np.abs(mc / fisher - 1.0)))
    acceptance_note(f"Fisher {ct.window_name(window)} vs MC max rel {worst:.3f}")
    assert worst <= 0.02


# 6. censored LR invariance


@pytest.mark.acceptance(6)
def test_censored_lr_invariant_zu_vs_zl_plus(acceptance_note):
    worst = 0.0
    for i, p in enumerate(datasets(50, base=6000)):
        window = NARROW if i % 2 else WIDE
        zu, zl = kn.builtin_kernel("ZU", window), kn.builtin_kernel("ZL+", window)
        a = uc.censored_lr_from_transform(zu, zu.G(p)).p_value
        b = uc.censored_lr_from_transform(zl, zl.G(p)).p_value
        worst = max(worst, abs(a - b))
    acceptance_note(f"50 datasets, max p-value diff {worst:.1e}")
    assert worst <= 1e-6


# 7. z0


@pytest.mark.acceptance(7)
def test_z0_root(acceptance_note):
    z0 = kn.solve_z0()
    f = kn._z0_equation(z0)
    phi = float(sf.std_normal_cdf(z0))
    acceptance_note(f"Phi(z0) = {phi:.4f}, |f| = {abs(f):.1e}")
    assert 0.79 <= phi <= 0.81 and abs(f) <= 1e-12
    assert abs(z0 - float(orc.solve_z0())) <= 1e-10


# 8. spurious PIT pipeline


def spurious_set(records, q=ig.DEFAULT_Q):
    flags, _ = ig.detect_spurious(records, q)
    return {i for i, f in enumerate(flags) if f == SPURIOUS}


@pytest.mark.acceptance(8)
@pytest.mark.parametrize("count", [1, 5])
def test_planted_outliers_flagged_exactly(count, acceptance_note):
    recs = syn.clean_records(800 + count)
    planted = syn.plant_outliers(recs, count, count)
    got = spurious_set(recs)
    acceptance_note(f"{count} planted, {len(got)} flagged, {len(got & planted)} matched")
    assert got == planted


@pytest.mark.acceptance(8)
def test_q_zero_flags_nothing(acceptance_note):
    recs = syn.clean_records(810)
    syn.plant_outliers(recs, 5, 0)
    got = spurious_set(recs, 0.0)
    acceptance_note(f"q=0 flagged {len(got)}")
    assert not got


@pytest.mark.acceptance(8)
def test_clean_data_flags_nothing(acceptance_note):
    clean = sum(not spurious_set(syn.clean_records(seed)) for seed in range(100))
    acceptance_note(f"clean data: {clean}/100 seeds flag nothing")
    assert clean >= 99


# 9. determinism across workers


@pytest.mark.acceptance(9)
def test_simulate_identical_across_workers(tmp_path, acceptance_note):
    cfg = tmp_path / "sim.json"
    cfg.write_text(
        '{"simulation": {"dgps": ["Normal", "t5/ARMA(0.95,-0.85)"], "windows": ["narrow"],'
        ' "tests": ["BIN", "PNS", "LR3", {"test": "ZU", "cvt": "MD4", "k": 4}], "n": [250], "chunk": 8}}'
    )
    outputs = []
    for workers in (1, 2, 8):
        out = tmp_path / f"w{workers}"
        code = cli.main(["simulate", "--config", str(cfg), "--reps", "48", "--seed", "17",
                         "--workers", str(workers), "--output-dir", str(out)])
        assert code == 0
        outputs.append((out / "power_table.csv").read_bytes() + (out / "power_table.json").read_bytes())
    acceptance_note("workers 1, 2, 8 byte-identical" if len(set(outputs)) == 1 else "outputs differ")
    assert len(set(outputs)) == 1
