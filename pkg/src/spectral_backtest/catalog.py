"""Named test configurations shared by the CLI and the simulation harness.

A :class:`TestConfig` names a test mnemonic, a kernel window and optionally a
CVT with lag counts.  :func:`run_test` applies it to one PIT series and
:func:`evaluate_batch` computes p-values for many equal-length samples at once
(rows of a 2-d array), reusing the batched statistics of the test modules.
"""

import functools
from dataclasses import dataclass

import numpy as np

from . import conditional as cd
from . import kernels as kn
from . import special_functions as sf
from . import unconditional as uc
from .errors import ConfigError, DomainError, UnsupportedCombination
from .results import format_window

WINDOWS = {"narrow": kn.NARROW, "wide": kn.WIDE}

MONO_TESTS = ("BIN", "ZU3", "ZU5", "ZU", "ZA", "ZE", "ZL+", "ZL-")
PAIR_TESTS = ("ZLL", "PNS")
CELL_TESTS = ("PE3", "PE5", "LR1", "LR3")
TEST_IDS = MONO_TESTS + PAIR_TESTS + CELL_TESTS + ("LRB", "Z")
CONDITIONAL_TESTS = MONO_TESTS + PAIR_TESTS + ("Z",)


def window_name(window):
    for name, w in WINDOWS.items():
        if tuple(window) == w:
            return name
    return format_window(window)


def parse_window(value):
    """Window from a name ("narrow", "wide") or a pair of levels."""
    if isinstance(value, str):
        try:
            return WINDOWS[value.lower()]
        except KeyError:
            raise ConfigError(f"unknown window name {value!r}") from None
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"window must be a name or [a1, a2], got {value!r}") from None
    if not 0.0 <= lo < hi <= 1.0:
        raise ConfigError(f"window must satisfy 0 <= a1 < a2 <= 1, got {value!r}")
    return (lo, hi)


@dataclass(frozen=True)
class TestConfig:
    """One backtest: mnemonic, window and an optional CVT.

    ``k`` is the lag count of a conditional test; for the bispectral ZLL and
    PNS tests ``k`` lags are used for the first kernel and ``k2`` for the
    second.  ``kernel`` carries a user-defined measure for test ``"Z"``.
    """

    __test__ = False

    test: str
    window: tuple = kn.NARROW
    cvt: cd.CvtSpec | None = None
    k: int = 4
    k2: int = 0
    estimator: str = "null"
    kernel: kn.KernelMeasure | None = None

    def __post_init__(self):
        name = kn.canonical_name(self.test)
        object.__setattr__(self, "test", name)
        object.__setattr__(self, "window", parse_window(self.window))
        if name not in TEST_IDS:
            raise ConfigError(f"unknown test {self.test!r}")
        if name == "Z" and self.kernel is None:
            raise ConfigError("test 'Z' needs a kernel specification")
        if self.cvt is not None:
            if name not in CONDITIONAL_TESTS:
                raise UnsupportedCombination(f"{name} has no conditional (CVT) version")
            if self.k < 0 or self.k2 < 0:
                raise ConfigError("lag counts must be non-negative")
        if self.estimator not in ("null", "gw"):
            raise ConfigError(f"unknown covariance estimator {self.estimator!r}")
        if name in ("ZU3", "ZU5", "PE3", "PE5", "LR3"):
            try:
                kn.discrete_levels(self.window, int(name[-1]))
            except DomainError as exc:
                raise ConfigError(str(exc)) from None
        if name == "PNS":
            try:
                kn._check_pns_window(*self.window)
            except DomainError as exc:
                raise ConfigError(str(exc)) from None

    @property
    def window_label(self):
        if self.test == "Z":
            return format_window(self.kernel.support)
        return window_name(self.window)

    @property
    def cvt_label(self):
        if self.cvt is None:
            return "None"
        if self.test in PAIR_TESTS:
            return f"{self.cvt.label}(k1={self.k},k2={self.k2})"
        return f"{self.cvt.label}(k={self.k})"

    @property
    def label(self):
        return self.test if self.test != "Z" else f"Z[{self.kernel.label}]"


# ---------------------------------------------------------------------------
# kernels and moments


@functools.lru_cache(maxsize=None)
def _mono_kernel(test, window):
    if test == "BIN":
        return kn.dirac_kernel(kn.VAR_LEVEL, label="BIN")
    if test in ("ZU3", "ZU5"):
        return kn.discrete_kernel(kn.discrete_levels(window, int(test[-1])), label=test)
    return kn.builtin_kernel(test, window, normalized=True)


@functools.lru_cache(maxsize=None)
def _mono_moments(test, window):
    return kn.cov_matrix([_mono_kernel(test, window)])


@functools.lru_cache(maxsize=None)
def _pair(test, window):
    if test == "ZLL":
        # decreasing kernel first: in conditional tests the k lags go to ZL-
        ks = (kn.builtin_kernel("ZL-", window, True), kn.builtin_kernel("ZL+", window, True))
        return ks, kn.cov_matrix(ks)
    k1, k2, _ = kn.pns_kernel(*window)
    return (k1, k2), kn.pns_moments(*window)


def kernels_for(config):
    """Kernel measures and their null MomentSet for a mono- or bispectral test."""
    if config.test == "Z":
        return (config.kernel,), kn.cov_matrix([config.kernel])
    if config.test in MONO_TESTS:
        return (_mono_kernel(config.test, config.window),), _mono_moments(config.test, config.window)
    if config.test in PAIR_TESTS:
        return _pair(config.test, config.window)
    raise UnsupportedCombination(f"{config.test} is not a kernel Z-test")


def _levels(config):
    if config.test == "LR1":
        return np.array([kn.VAR_LEVEL])
    return np.array(kn.discrete_levels(config.window, int(config.test[-1])))


# ---------------------------------------------------------------------------
# single series


def run_test(config, pits, imputed=None):
    """Apply ``config`` to one PIT series; returns a TestResult."""
    t = config.test
    w = config.window
    if config.cvt is not None:
        ks, ms = kernels_for(config)
        if len(ks) == 1:
            res = cd.md_test(ks[0], config.cvt, config.k, pits, imputed, ms, config.estimator, w)
        else:
            res = cd.bispectral_md_test(
                ks, (config.cvt, config.cvt), config.k, config.k2, pits, imputed, ms, config.estimator, w
            )
    elif t in ("PE3", "PE5"):
        res = uc.pearson_multinomial_test(_levels(config), pits)
    elif t == "LR1":
        res = uc.binomial_lr_test(kn.VAR_LEVEL, pits)
    elif t == "LR3":
        res = uc.multinomial_lr_test(_levels(config), pits)
    elif t == "LRB":
        res = uc.berkowitz_lr_test(*w, pits)
    elif t == "PNS":
        res = uc.pns_score_test(*w, pits)
    else:
        ks, ms = kernels_for(config)
        if len(ks) == 1:
            res = uc.mono_z_test(ks[0], pits, ms, window=w)
        else:
            res = uc.multi_z_test(ks, pits, ms, window=w)
    res.test_id = config.label
    res.window = config.window_label
    res.cvt = config.cvt_label
    return res


# ---------------------------------------------------------------------------
# batches


def _lagged_design(h, k):
    # rows t = k..n-1 of (1, h_{t-1}, ..., h_{t-k}) for every sample
    n = h.shape[-1]
    cols = [np.ones(h.shape[:-1] + (n - k,))]
    cols += [h[..., k - lag : n - lag] for lag in range(1, k + 1)]
    return np.stack(cols, axis=-1)


def evaluate_batch(config, P):
    """p-values of ``config`` for each row of the sample matrix ``P``.

    Returns
    -------
    pvals : ndarray (B,), NaN where the test is not computable
    failed : ndarray (B,) of bool
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2:
        raise DomainError("evaluate_batch expects a 2-d array of samples")
    nb, n = P.shape
    t = config.test
    failed = np.zeros(nb, dtype=bool)

    if config.cvt is not None:
        ks, ms = kernels_for(config)
        k = max(config.k, config.k2) if len(ks) == 2 else config.k
        if n <= k + 1:
            raise DomainError(f"need more than k+1 = {k + 1} observations")
        X = _lagged_design(cd.apply_cvt(config.cvt, P), k)
        tail = P[:, k:]
        if len(ks) == 1:
            stat, failed = cd.md_statistics(X, ks[0].G(tail) - ms.mu[0], ms.cov[0, 0], config.estimator)
            df = k + 1
        else:
            w1 = ks[0].G(tail) - ms.mu[0]
            w2 = ks[1].G(tail) - ms.mu[1]
            stat, sh, ss = cd.bispectral_statistics(
                X[..., : config.k + 1], X[..., : config.k2 + 1], w1, w2, ms.cov, config.estimator
            )
            failed = sh | ss
            df = config.k + config.k2 + 2
        stat = np.where(failed, 0.0, stat)
        p = sf.chi_square_sf(stat, df)
        return np.where(failed, np.nan, p), failed

    if t in CELL_TESTS:
        levels = _levels(config)
        counts = uc.cell_counts_batch(P, levels)
        theta = uc.cell_probabilities(levels)
        if t.startswith("PE"):
            stat = uc.pearson_batch(counts, theta)
        else:
            stat = np.maximum(uc.multinomial_lr_batch(counts, theta), 0.0)
        return sf.chi_square_sf(stat, levels.size), failed
    if t == "LRB":
        lr, ok = uc.censored_lr_batch(uc.censored_stats_batch(P, *config.window), *config.window)
        failed = ~ok
        return np.where(failed, np.nan, sf.chi_square_sf(np.where(failed, 0.0, lr), 2)), failed
    if t == "PNS":
        sbar = uc.pns_score_batch(P, *config.window)
        _, ms = kernels_for(config)
        stat = uc.quadratic_batch(sbar, 0.0, ms.cov, n)
        return sf.chi_square_sf(stat, 2), failed

    ks, ms = kernels_for(config)
    if len(ks) == 1:
        z = uc.z_batch(ks[0].G(P), ms.mu[0], ms.cov[0, 0])
        return sf.chi_square_sf(z * z, 1), failed
    wbar = np.stack([k.G(P).mean(axis=-1) for k in ks], axis=-1)
    stat = uc.quadratic_batch(wbar, ms.mu, ms.cov, n)
    return sf.chi_square_sf(stat, len(ks)), failed


# ---------------------------------------------------------------------------
# JSON helpers


def kernel_from_spec(spec):
    """Kernel measure from a config block ``{family, window, params|levels|weights, normalized}``."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError("kernel spec needs a 'family'")
    family = kn.canonical_name(spec["family"])
    normalized = bool(spec.get("normalized", False))
    label = spec.get("label")
    try:
        if family in kn.BETA_FAMILY:
            return kn.builtin_kernel(family, parse_window(spec.get("window", "narrow")), normalized)
        if family == "BETA":
            params = spec.get("params") or {}
            if "a" not in params or "b" not in params:
                raise ConfigError("beta kernel needs params {a, b}")
            window = parse_window(spec.get("window", "narrow"))
            return kn.beta_kernel(params["a"], params["b"], window, normalized=normalized, label=label)
        if family in ("DISCRETE", "DIRAC", "BIN"):
            levels = spec.get("levels", [kn.VAR_LEVEL])
            if family != "DISCRETE" and len(levels) == 1:
                mass = (spec.get("weights") or [1.0])[0]
                return kn.dirac_kernel(levels[0], mass, label=label)
            return kn.discrete_kernel(levels, spec.get("weights"), label=label)
        if family == "BERKOWITZ":
            lo, hi = parse_window(spec.get("window", [kn.NARROW[0], 1.0]))
            return kn.berkowitz_kernel(lo, hi)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown kernel family {spec['family']!r}")


def cvt_from_spec(spec):
    """CVT from a mnemonic string or ``{variant, threshold?, exponent?}``."""
    if spec is None or (isinstance(spec, str) and spec.lower() == "none"):
        return None
    try:
        if isinstance(spec, str):
            return cd.make_cvt(spec)
        if isinstance(spec, dict) and "variant" in spec:
            return cd.make_cvt(spec["variant"], spec.get("threshold"), spec.get("exponent"))
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"invalid CVT spec {spec!r}")


def config_from_spec(spec):
    """TestConfig from a JSON test block."""
    if isinstance(spec, str):
        spec = {"test": spec}
    if not isinstance(spec, dict) or ("test" not in spec and "kernel" not in spec):
        raise ConfigError(f"test entry needs a 'test' or 'kernel' field: {spec!r}")
    kernel = kernel_from_spec(spec["kernel"]) if "kernel" in spec else None
    test = spec.get("test", "Z")
    window = spec.get("window", "narrow")
    if kernel is not None:
        test = "Z"
    try:
        return TestConfig(
            test=test,
            window=parse_window(window),
            cvt=cvt_from_spec(spec.get("cvt")),
            k=int(spec.get("k", spec.get("k1", 4))),
            k2=int(spec.get("k2", 0)),
            estimator=spec.get("estimator", "null"),
            kernel=kernel,
        )
    except UnsupportedCombination as exc:
        raise ConfigError(str(exc)) from None
