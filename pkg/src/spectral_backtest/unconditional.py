"""Unconditional coverage tests.

Every public test takes PIT values (an array with NaN for missing entries, or
a :class:`~spectral_backtest.series.PitSeries`) and returns a
:class:`~spectral_backtest.results.TestResult`.  The private ``*_batch``
helpers evaluate the same statistics along the last axis of a 2-d array of
samples and are what the Monte Carlo harness uses.
"""

import warnings

import numpy as np
from scipy import special

from . import kernels as kn
from . import special_functions as sf
from .errors import (
    DegenerateSampleWarning,
    DomainError,
    OptimizationFailure,
    SingularCovariance,
)
from .results import TestResult, format_window
from .series import as_pit_array


def _valid(pits):
    p = as_pit_array(pits)
    return p[~np.isnan(p)]


def _need(n, minimum=2):
    if n < minimum:
        raise DomainError(f"need at least {minimum} non-missing PIT values, got {n}")


def _degenerate(w, out):
    if w.size and np.all(w == w[:1]):
        msg = "DegenerateSample: every transformed value is identical"
        warnings.warn(msg, DegenerateSampleWarning, stacklevel=3)
        out.append(msg)


# ---------------------------------------------------------------------------
# Z-tests


def z_batch(w, mu, sigma2):
    """sqrt(n) (mean(w) - mu) / sigma along the last axis."""
    n = w.shape[-1]
    return np.sqrt(n) * (w.mean(axis=-1) - mu) / np.sqrt(sigma2)


def quadratic_batch(wbar, mu, cov, n):
    """n (wbar - mu)' cov^-1 (wbar - mu) for rows of ``wbar``."""
    d = np.asarray(wbar) - mu
    sol = np.linalg.solve(cov, d.T).T
    return n * np.sum(d * sol, axis=-1)


def mono_z_test(kernel, pits, moments=None, test_id=None, window=None):
    """Monospectral Z-test of E[G(P)] = mu_W.

    Parameters
    ----------
    kernel : KernelMeasure
    pits : array_like or PitSeries
    moments : MomentSet, optional
        Overrides the null mean and variance computed from the kernel.
    """
    p = _valid(pits)
    n = p.size
    _need(n)
    ms = moments if moments is not None else kn.cov_matrix([kernel])
    mu, s2 = float(ms.mu[0]), float(ms.cov[0, 0])
    if not s2 > 0:
        raise SingularCovariance("kernel has zero variance under the null")
    w = kernel.G(p)
    notes = []
    _degenerate(w, notes)
    z = float(z_batch(w, mu, s2))
    return TestResult(
        test_id=test_id or kernel.label,
        statistic=z,
        df=1,
        p_value=sf.chi_square_sf(z * z, 1),
        n_used=n,
        kernel_id=kernel.label,
        window=format_window(window),
        warnings=notes,
    )


def multi_z_test(kernels, pits, moments=None, test_id=None, window=None):
    """m-spectral Z-test: n (Wbar - mu)' Sigma^-1 (Wbar - mu) ~ chi2(m)."""
    kernels = list(kernels)
    p = _valid(pits)
    n = p.size
    _need(n)
    ms = moments if moments is not None else kn.cov_matrix(kernels)
    if ms.singular:
        raise SingularCovariance("kernel covariance matrix is singular")
    w = np.stack([k.G(p) for k in kernels], axis=-1)
    notes = []
    _degenerate(w, notes)
    stat = float(quadratic_batch(w.mean(axis=0), ms.mu, ms.cov, n))
    m = len(kernels)
    return TestResult(
        test_id=test_id or "+".join(k.label for k in kernels),
        statistic=stat,
        df=m,
        p_value=sf.chi_square_sf(stat, m),
        n_used=n,
        kernel_id="+".join(k.label for k in kernels),
        window=format_window(window),
        warnings=notes,
    )


def binomial_score_test(alpha, pits):
    """Exceedance-count Z-test at level ``alpha`` (Dirac kernel Z-test)."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    return mono_z_test(kn.dirac_kernel(alpha), pits, test_id="BIN")


# ---------------------------------------------------------------------------
# multinomial tests


def _check_levels(levels):
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or levels.size < 1:
        raise DomainError("need at least one level")
    if np.any(levels <= 0) or np.any(levels >= 1) or np.any(np.diff(levels) <= 0):
        raise DomainError("levels must be strictly increasing inside (0, 1)")
    return levels


def cell_probabilities(levels):
    edges = np.concatenate([[0.0], levels, [1.0]])
    return np.diff(edges)


def cell_counts_batch(p, levels):
    """Counts of PITs in the m+1 cells; a PIT equal to a level joins the upper cell."""
    idx = np.searchsorted(levels, p, side="right")
    m = len(levels)
    return np.stack([(idx == j).sum(axis=-1) for j in range(m + 1)], axis=-1)


def pearson_batch(counts, theta):
    n = counts.sum(axis=-1, keepdims=True)
    e = n * theta
    return np.sum((counts - e) ** 2 / e, axis=-1)


def multinomial_lr_batch(counts, theta):
    n = counts.sum(axis=-1, keepdims=True)
    return 2.0 * np.sum(special.xlogy(counts, counts / (n * theta)), axis=-1)


def pearson_multinomial_test(levels, pits):
    """Pearson chi-square on the cells cut by ``levels``; df = number of levels."""
    levels = _check_levels(levels)
    p = _valid(pits)
    n = p.size
    _need(n, 1)
    stat = float(pearson_batch(cell_counts_batch(p, levels), cell_probabilities(levels)))
    m = levels.size
    return TestResult(f"PE{m}", stat, m, sf.chi_square_sf(stat, m), n, kernel_id=f"indicators({m})")


def multinomial_lr_test(levels, pits):
    """Multinomial likelihood-ratio test on the cells cut by ``levels``."""
    levels = _check_levels(levels)
    p = _valid(pits)
    n = p.size
    _need(n, 1)
    stat = float(multinomial_lr_batch(cell_counts_batch(p, levels), cell_probabilities(levels)))
    stat = max(stat, 0.0)
    m = levels.size
    return TestResult(f"LR{m}", stat, m, sf.chi_square_sf(stat, m), n, kernel_id=f"indicators({m})")


def binomial_lr_test(alpha, pits):
    """Likelihood-ratio test of the exceedance probability 1 - alpha."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    res = multinomial_lr_test([alpha], pits)
    res.test_id = "LR1"
    return res


# ---------------------------------------------------------------------------
# censored probitnormal model


def censored_stats_batch(p, alpha1, alpha2):
    """Sufficient statistics of the probitnormal likelihood censored to [alpha1, alpha2].

    Returns a dict of arrays: ``n``, ``lo`` (P <= alpha1), ``hi`` (P >= alpha2),
    ``m`` (interior count), ``s1`` and ``s2`` (sums of z and z^2 over the interior).
    """
    p = np.asarray(p, dtype=float)
    low = p <= alpha1
    high = (p >= alpha2) if alpha2 < 1.0 else np.zeros(p.shape, dtype=bool)
    inner = ~(low | high)
    z = np.where(inner, sf._probit(np.where(inner, p, 0.5)), 0.0)
    return {
        "n": np.full(p.shape[:-1], p.shape[-1], dtype=float),
        "lo": low.sum(axis=-1).astype(float),
        "hi": high.sum(axis=-1).astype(float),
        "m": inner.sum(axis=-1).astype(float),
        "s1": z.sum(axis=-1),
        "s2": (z * z).sum(axis=-1),
    }


def _take(stats, idx):
    return {k: v[idx] for k, v in stats.items()}


def censored_loglik(theta, stats, alpha1, alpha2):
    """Average log-likelihood at theta = (mu, log sigma), one row per sample.

    Terms free of theta (the Jacobian of the probit transform) are dropped.
    """
    mu, s = theta[..., 0], theta[..., 1]
    sig = np.exp(s)
    z1 = sf._probit(alpha1)
    ll = stats["lo"] * special.log_ndtr((z1 - mu) / sig)
    if alpha2 < 1.0:
        z2 = sf._probit(alpha2)
        ll = ll + stats["hi"] * special.log_ndtr((mu - z2) / sig)
    q = stats["s2"] - 2.0 * mu * stats["s1"] + stats["m"] * mu * mu
    ll = ll - stats["m"] * s - 0.5 * q / (sig * sig)
    return ll / stats["n"]


def censored_score(theta, stats, alpha1, alpha2):
    """Gradient of :func:`censored_loglik` with respect to (mu, log sigma)."""
    mu, s = theta[..., 0], theta[..., 1]
    sig = np.exp(s)
    a = (sf._probit(alpha1) - mu) / sig
    lam_a = np.exp(_log_mills(a))
    g_mu = -stats["lo"] * lam_a / sig
    g_s = -stats["lo"] * lam_a * a
    if alpha2 < 1.0:
        b = (mu - sf._probit(alpha2)) / sig
        lam_b = np.exp(_log_mills(b))
        g_mu = g_mu + stats["hi"] * lam_b / sig
        g_s = g_s - stats["hi"] * lam_b * b
    q = stats["s2"] - 2.0 * mu * stats["s1"] + stats["m"] * mu * mu
    g_mu = g_mu + (stats["s1"] - stats["m"] * mu) / (sig * sig)
    g_s = g_s - stats["m"] + q / (sig * sig)
    return np.stack([g_mu, g_s], axis=-1) / stats["n"][..., None]


def _log_mills(x):
    # log(phi(x) / Phi(x))
    return -0.5 * x * x - 0.5 * np.log(2 * np.pi) - special.log_ndtr(x)


def nelder_mead_batch(fun, x0, step=0.25, xatol=1e-9, fatol=1e-14, maxiter=2000):
    """Minimize many independent functions with the Nelder-Mead simplex.

    ``fun(x, rows)`` returns the objective values of problems ``rows`` at the
    points ``x`` (one row of ``x`` per entry of ``rows``).  Each problem follows the classic reflection, expansion,
    contraction and shrink rules; converged problems are frozen.

    Returns
    -------
    x : (B, d) minimizers, f : (B,) minimum values, converged : (B,) bool
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    nb, d = x0.shape
    sim = np.repeat(x0[:, None, :], d + 1, axis=1)
    for j in range(d):
        sim[:, j + 1, j] += step
    rows = np.arange(nb)
    fsim = np.stack([fun(sim[:, j], rows) for j in range(d + 1)], axis=1)
    done = np.zeros(nb, dtype=bool)
    for _ in range(maxiter):
        order = np.argsort(fsim, axis=1, kind="stable")
        sim = sim[rows[:, None], order]
        fsim = fsim[rows[:, None], order]
        xspread = np.max(np.abs(sim[:, 1:] - sim[:, :1]), axis=(1, 2))
        fspread = np.max(np.abs(fsim[:, 1:] - fsim[:, :1]), axis=1)
        done |= (xspread <= xatol) & (fspread <= fatol)
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        s, fs = sim[act], fsim[act]
        best, worst = fs[:, 0], fs[:, -1]
        second = fs[:, -2]
        xbar = s[:, :-1].mean(axis=1)
        xw = s[:, -1]
        xr = 2.0 * xbar - xw
        fr = fun(xr, act)
        xe = 3.0 * xbar - 2.0 * xw
        fe = fun(xe, act)
        xc = 1.5 * xbar - 0.5 * xw
        fc = fun(xc, act)
        xcc = 0.5 * xbar + 0.5 * xw
        fcc = fun(xcc, act)

        new_x = xw.copy()
        new_f = worst.copy()
        shrink = np.zeros(act.size, dtype=bool)

        c1 = fr < best
        use_e = c1 & (fe < fr)
        new_x[use_e], new_f[use_e] = xe[use_e], fe[use_e]
        use_r = (c1 & ~use_e) | (~c1 & (fr < second))
        new_x[use_r], new_f[use_r] = xr[use_r], fr[use_r]
        rest = ~c1 & ~(fr < second)
        outside = rest & (fr < worst)
        ok_c = outside & (fc <= fr)
        new_x[ok_c], new_f[ok_c] = xc[ok_c], fc[ok_c]
        inside = rest & ~(fr < worst)
        ok_cc = inside & (fcc < worst)
        new_x[ok_cc], new_f[ok_cc] = xcc[ok_cc], fcc[ok_cc]
        shrink = (outside & ~ok_c) | (inside & ~ok_cc)

        s[:, -1] = new_x
        fs[:, -1] = new_f
        if np.any(shrink):
            sh = np.flatnonzero(shrink)
            s[sh, 1:] = s[sh, :1] + 0.5 * (s[sh, 1:] - s[sh, :1])
            for j in range(1, d + 1):
                fs[sh, j] = fun(s[sh, j], act[sh])
        sim[act], fsim[act] = s, fs
    order = np.argsort(fsim, axis=1, kind="stable")
    sim = sim[rows[:, None], order]
    fsim = fsim[rows[:, None], order]
    return sim[:, 0], fsim[:, 0], done


def censored_lr_batch(stats, alpha1, alpha2):
    """Likelihood-ratio statistics of theta = (0, 1) in the censored model.

    Returns ``(lr, ok)``; ``ok`` is False where the optimizer failed.
    """
    nb = stats["n"].shape[0]
    lr = np.zeros(nb)
    ok = np.ones(nb, dtype=bool)
    theta0 = np.zeros((nb, 2))
    f0 = -censored_loglik(theta0, stats, alpha1, alpha2)

    # No interior points: the supremum is the two-cell multinomial limit.
    empty = stats["m"] == 0
    if np.any(empty):
        e = _take(stats, empty)
        sup = special.xlogy(e["lo"], e["lo"] / e["n"]) + special.xlogy(e["hi"], e["hi"] / e["n"])
        lr[empty] = 2.0 * (sup / e["n"] + f0[empty]) * e["n"]
    idx = np.flatnonzero(~empty)
    if idx.size:
        sub = _take(stats, idx)

        def fun(th, rows):
            return -censored_loglik(th, _take(sub, rows), alpha1, alpha2)

        xhat, fhat, conv = nelder_mead_batch(fun, np.zeros((idx.size, 2)))
        grad = censored_score(xhat, sub, alpha1, alpha2)
        conv &= np.max(np.abs(grad), axis=1) <= 1e-6
        lr[idx] = 2.0 * sub["n"] * (f0[idx] - fhat)
        ok[idx] = conv
    return np.maximum(lr, 0.0), ok


def berkowitz_lr_test(alpha1, alpha2, pits):
    """LR test of (mu, sigma) = (0, 1) in the probitnormal model censored to [alpha1, alpha2].

    PITs at or below alpha1 contribute F(alpha1), those at or above alpha2
    (when alpha2 < 1) contribute 1 - F(alpha2); interior values contribute the
    density.  The MLE is found by Nelder-Mead in (mu, log sigma) from (0, 0).
    """
    if not (0.0 < alpha1 < alpha2 <= 1.0):
        raise DomainError("window must satisfy 0 < a1 < a2 <= 1")
    p = _valid(pits)
    n = p.size
    _need(n)
    if alpha2 == 1.0 and np.any(p >= 1.0):
        raise DomainError("a PIT of exactly 1 has zero likelihood when alpha2 = 1")
    stats = censored_stats_batch(p[None, :], alpha1, alpha2)
    lr, ok = censored_lr_batch(stats, alpha1, alpha2)
    if not ok[0]:
        raise OptimizationFailure("censored probitnormal MLE did not converge")
    stat = float(lr[0])
    return TestResult(
        "LRB", stat, 2, sf.chi_square_sf(stat, 2), n, kernel_id="probitnormal",
        window=format_window((alpha1, alpha2)),
    )


def _invert_G(kernel, w, lo, hi, iterations=80):
    a = np.full(w.shape, lo)
    b = np.full(w.shape, hi)
    for _ in range(iterations):
        mid = 0.5 * (a + b)
        below = kernel.G(mid) < w
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return 0.5 * (a + b)


def censored_lr_from_transform(kernel, w):
    """Censored LR test computed from transformed values W = G(P).

    The kernel must be continuous on a single window [a1, a2].  Values with
    W = 0 are censored below a1, values with W = G(a2) censored above a2, and
    interior values are mapped back through G^-1.  The statistic is therefore
    the same for every kernel sharing that window.
    """
    if kernel.atoms or len(kernel.pieces) != 1:
        raise DomainError("need a kernel with one continuous piece")
    lo, hi = kernel.pieces[0].window
    w = np.asarray(w, dtype=float)
    w = w[~np.isnan(w)]
    top = kernel.total_mass
    p = np.where(w <= 0.0, lo, np.where(w >= top, hi, np.nan))
    inner = np.isnan(p)
    p[inner] = _invert_G(kernel, w[inner], lo, hi)
    return berkowitz_lr_test(lo, hi, p)


# ---------------------------------------------------------------------------
# probitnormal score test


def pns_score_batch(p, alpha1, alpha2):
    """Mean score at (0, 1) for each row of ``p`` via the censored statistics."""
    st = censored_stats_batch(p, alpha1, alpha2)
    lower = kn.psi_lower(alpha1)
    sbar = st["lo"][..., None] * lower
    if alpha2 < 1.0:
        sbar = sbar + st["hi"][..., None] * kn.psi_upper(alpha2)
    sbar = sbar + np.stack([st["s1"], st["s2"] - st["m"]], axis=-1)
    return sbar / st["n"][..., None]


def pns_scores(p, alpha1, alpha2):
    """Per-observation score vectors psi_lower, psi_star or psi_upper."""
    p = np.asarray(p, dtype=float)
    out = kn.psi_star(np.clip(p, alpha1, alpha2))
    out[p <= alpha1] = kn.psi_lower(alpha1)
    if alpha2 < 1.0:
        out[p >= alpha2] = kn.psi_upper(alpha2)
    return out


def pns_score_test(alpha1, alpha2, pits):
    """Score test of (mu, sigma) = (0, 1) in the censored probitnormal model.

    Statistic n Sbar' I^-1 Sbar with the closed-form information matrix; it
    coincides with the bispectral Z-test on the two score kernels.
    """
    kn._check_pns_window(alpha1, alpha2)
    p = _valid(pits)
    n = p.size
    _need(n)
    sbar = pns_scores(p, alpha1, alpha2).mean(axis=0)
    info = kn.pns_fisher_information(alpha1, alpha2)
    stat = float(n * sbar @ np.linalg.solve(info, sbar))
    return TestResult(
        "PNS", stat, 2, sf.chi_square_sf(stat, 2), n, kernel_id="PNS",
        window=format_window((alpha1, alpha2)),
    )
