"""Martingale-difference tests of conditional coverage.

Under the null, W_t - mu_W is uncorrelated with any bounded function of past
PITs.  The tests regress on h_{t-1} = (1, h(P_{t-1}), ..., h(P_{t-k})) where
h is a conditioning variable transformation (CVT) and form

    Y_t = h_{t-1} (W_t - mu_W),    T = n Ybar' (sigma_W^2 H)^-1 Ybar,

with H = sum h h' / n.  With k = 0 this is the squared unconditional Z-test.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels as kn
from . import special_functions as sf
from .errors import DegenerateSampleWarning, DomainError, SingularCovariance, SingularH
from .results import TestResult, format_window
from .series import as_pit_array

_SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class CvtSpec:
    """Conditioning variable transformation.

    ``variant`` is one of ``"upper"`` (1{p >= threshold}), ``"two_sided"``
    (1{V(p) >= threshold}) or ``"power"`` (V(p)**exponent), with V(p) = |2p - 1|.
    """

    variant: str
    threshold: float | None = None
    exponent: float | None = None
    label: str = ""

    def __post_init__(self):
        if self.variant in ("upper", "two_sided"):
            if self.threshold is None or not 0.0 < self.threshold < 1.0:
                raise DomainError("indicator CVTs need a threshold in (0, 1)")
        elif self.variant == "power":
            if self.exponent is None or not self.exponent > 0:
                raise DomainError("power CVTs need a positive exponent")
        else:
            raise DomainError(f"unknown CVT variant {self.variant!r}")
        if not self.label:
            object.__setattr__(self, "label", self._default_label())

    def _default_label(self):
        if self.variant == "upper":
            return f"EM1({self.threshold:g})"
        if self.variant == "two_sided":
            return f"EM2({self.threshold:g})"
        return f"powerV({self.exponent:g})"


def make_cvt(name, threshold=None, exponent=None):
    """CVT from its mnemonic: EM1, EM2, MD4, MDhalf or powerV."""
    key = kn.canonical_name(name)
    if key == "EM1":
        return CvtSpec("upper", 0.99 if threshold is None else threshold, label="EM1")
    if key == "EM2":
        return CvtSpec("two_sided", 0.98 if threshold is None else threshold, label="EM2")
    if key == "MD4":
        return CvtSpec("power", exponent=4.0, label="MD4")
    if key == "MDhalf":
        return CvtSpec("power", exponent=0.5, label="MDhalf")
    if key == "POWERV":
        return CvtSpec("power", exponent=exponent)
    raise DomainError(f"unknown CVT {name!r}")


def apply_cvt(cvt, p):
    """Evaluate h(p); vectorized over ``p``."""
    p = np.asarray(p, dtype=float)
    if cvt.variant == "upper":
        out = (p >= cvt.threshold).astype(float)
    else:
        v = np.abs(2.0 * p - 1.0)
        if cvt.variant == "two_sided":
            out = (v >= cvt.threshold).astype(float)
        else:
            out = v**cvt.exponent
    return sf._out(out)


def build_regressor_matrix(cvt, k, pits, imputed=None):
    """Rows h_{t-1} for t = k+1..n (1-based) and the time index of each row.

    Lagged PITs that are missing are replaced by ``imputed`` values where
    available; a row is dropped when one of its lags is still missing or its
    own PIT (the dependent observation) is missing.

    Returns
    -------
    X : ndarray (rows, k+1)
    t_index : ndarray of int, 0-based positions of the dependent observations
    """
    if k < 0:
        raise DomainError("lag count k must be non-negative")
    p = as_pit_array(pits)
    lagged = p.copy()
    if imputed is not None:
        imp = as_pit_array(imputed)
        if imp.shape != p.shape:
            raise DomainError("imputed series is not aligned with the PIT series")
        fill = np.isnan(lagged)
        lagged[fill] = imp[fill]
    n = p.size
    t = np.arange(k, n)
    cols = [np.ones(t.size)]
    for lag in range(1, k + 1):
        vals = lagged[t - lag]
        cols.append(np.where(np.isnan(vals), np.nan, apply_cvt(cvt, np.nan_to_num(vals))))
    X = np.column_stack(cols) if t.size else np.empty((0, k + 1))
    keep = ~np.isnan(p[t]) & ~np.any(np.isnan(X), axis=1)
    return X[keep], t[keep]


def _singular(mat):
    eig = np.linalg.eigvalsh(mat)
    top = np.max(np.abs(eig), axis=-1)
    return (top == 0) | (eig[..., 0] <= _SINGULAR_RTOL * top)


def md_statistics(X, wtilde, sigma2, estimator="null"):
    """Batched MD statistics.

    Parameters
    ----------
    X : ndarray (..., rows, d)
        Regressor rows.
    wtilde : ndarray (..., rows)
        Centred transformed PITs.
    sigma2 : float
        Null variance of W.

    Returns
    -------
    stat : ndarray (...,), NaN where H is singular
    singular : ndarray (...,) of bool
    """
    n = X.shape[-2]
    Y = X * wtilde[..., None]
    ybar = Y.mean(axis=-2)
    H = np.einsum("...ti,...tj->...ij", X, X) / n
    singular = _singular(H)
    if estimator == "null":
        S = sigma2 * H
    elif estimator == "gw":
        S = np.einsum("...ti,...tj->...ij", Y, Y) / n
        singular = singular | _singular(S)
    else:
        raise DomainError(f"unknown covariance estimator {estimator!r}")
    eye = np.broadcast_to(np.eye(S.shape[-1]), S.shape)
    S = np.where(singular[..., None, None], eye, S)
    sol = np.linalg.solve(S, ybar[..., None])[..., 0]
    stat = n * np.sum(ybar * sol, axis=-1)
    return np.where(singular, np.nan, stat), singular


def _singular_h_message(cvt, k):
    return (
        f"SingularH: regressor matrix for CVT {cvt.label} with k={k} is singular; "
        "the lagged CVT values carry no variation (no tail events in the sample)"
    )


def md_test(kernel, cvt, k, pits, imputed=None, moments=None, estimator="null", window=None):
    """Monospectral martingale-difference test with ``k`` lags of the CVT.

    Raises
    ------
    SingularH
        If the regressor second-moment matrix cannot be inverted.
    """
    p = as_pit_array(pits)
    X, t = build_regressor_matrix(cvt, k, p, imputed)
    n = t.size
    if n <= k + 1:
        raise DomainError(f"need more than k+1 = {k + 1} usable rows, got {n}")
    ms = moments if moments is not None else kn.cov_matrix([kernel])
    mu, s2 = float(ms.mu[0]), float(ms.cov[0, 0])
    w = kernel.G(p[t])
    notes = []
    if np.all(w == w[0]):
        msg = "DegenerateSample: every transformed value is identical; the statistic equals the unconditional one"
        warnings.warn(msg, DegenerateSampleWarning, stacklevel=2)
        notes.append(msg)
    stat, singular = md_statistics(X, w - mu, s2, estimator)
    if singular:
        raise SingularH(_singular_h_message(cvt, k))
    stat = float(stat)
    return TestResult(
        test_id=f"{kernel.label}|{cvt.label}",
        statistic=stat,
        df=k + 1,
        p_value=sf.chi_square_sf(stat, k + 1),
        n_used=n,
        kernel_id=kernel.label,
        window=format_window(window),
        cvt=f"{cvt.label},k={k}",
        warnings=notes,
    )


def hadamard_weights(cov, k1, k2):
    """A_W with blocks sigma_1^2, sigma_12 and sigma_2^2 of sizes k1+1 and k2+1."""
    sizes = (k1 + 1, k2 + 1)
    A = np.empty((sum(sizes), sum(sizes)))
    A[: sizes[0], : sizes[0]] = cov[0, 0]
    A[: sizes[0], sizes[0]:] = cov[0, 1]
    A[sizes[0]:, : sizes[0]] = cov[1, 0]
    A[sizes[0]:, sizes[0]:] = cov[1, 1]
    return A


def bispectral_statistics(X1, X2, w1, w2, cov, estimator="null"):
    """Batched bispectral MD statistics; returns (stat, singular_H, singular_S)."""
    n = X1.shape[-2]
    k1, k2 = X1.shape[-1] - 1, X2.shape[-1] - 1
    X = np.concatenate([X1, X2], axis=-1)
    Y = np.concatenate([X1 * w1[..., None], X2 * w2[..., None]], axis=-1)
    ybar = Y.mean(axis=-2)
    H = np.einsum("...ti,...tj->...ij", X, X) / n
    sing_h = _singular(H[..., : k1 + 1, : k1 + 1]) | _singular(H[..., k1 + 1:, k1 + 1:])
    if estimator == "null":
        S = hadamard_weights(cov, k1, k2) * H
    elif estimator == "gw":
        S = np.einsum("...ti,...tj->...ij", Y, Y) / n
    else:
        raise DomainError(f"unknown covariance estimator {estimator!r}")
    sing_s = _singular(S) & ~sing_h
    bad = sing_h | sing_s
    eye = np.broadcast_to(np.eye(S.shape[-1]), S.shape)
    S = np.where(bad[..., None, None], eye, S)
    sol = np.linalg.solve(S, ybar[..., None])[..., 0]
    stat = n * np.sum(ybar * sol, axis=-1)
    return np.where(bad, np.nan, stat), sing_h, sing_s


def bispectral_md_test(kernels, cvts, k1, k2, pits, imputed=None, moments=None, estimator="null", window=None):
    """Bispectral martingale-difference test; df = k1 + k2 + 2.

    Both series start at t = max(k1, k2) + 1 so that every row has all lags.
    """
    kern1, kern2 = kernels
    cvt1, cvt2 = cvts
    k = max(k1, k2)
    p = as_pit_array(pits)
    X1, t1 = build_regressor_matrix(cvt1, k, p, imputed)
    X2, t2 = build_regressor_matrix(cvt2, k, p, imputed)
    common = np.intersect1d(t1, t2)
    X1 = X1[np.isin(t1, common), : k1 + 1]
    X2 = X2[np.isin(t2, common), : k2 + 1]
    n = common.size
    if n <= k + 1:
        raise DomainError(f"need more than {k + 1} usable rows, got {n}")
    ms = moments if moments is not None else kn.cov_matrix([kern1, kern2])
    if ms.singular:
        raise SingularCovariance("kernel pair has a singular covariance matrix")
    w1 = kern1.G(p[common]) - ms.mu[0]
    w2 = kern2.G(p[common]) - ms.mu[1]
    notes = []
    if np.all(w1 == w1[0]) and np.all(w2 == w2[0]):
        msg = "DegenerateSample: every transformed value is identical"
        warnings.warn(msg, DegenerateSampleWarning, stacklevel=2)
        notes.append(msg)
    stat, sing_h, sing_s = bispectral_statistics(X1, X2, w1, w2, ms.cov, estimator)
    if sing_h:
        raise SingularH(_singular_h_message(cvt1 if k1 else cvt2, k))
    if sing_s:
        raise SingularCovariance("bispectral covariance matrix is singular")
    stat = float(stat)
    df = k1 + k2 + 2
    return TestResult(
        test_id=f"{kern1.label}+{kern2.label}|{cvt1.label}",
        statistic=stat,
        df=df,
        p_value=sf.chi_square_sf(stat, df),
        n_used=n,
        kernel_id=f"{kern1.label}+{kern2.label}",
        window=format_window(window),
        cvt=f"{cvt1.label},{cvt2.label},k1={k1},k2={k2}",
        warnings=notes,
    )
