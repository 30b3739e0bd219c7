"""Scalar special functions used throughout the package.

All functions accept scalars or numpy arrays and return an array of matching
shape (a Python float for scalar input).  The primitive transcendental
functions are delegated to ``scipy.special``; the normal and Student t
quantiles are refined with one Halley step and a safeguarded Newton iteration
respectively, and the unit-argument hypergeometric series is summed here.
"""

import math

import numpy as np
from scipy import special as sc

from .errors import ConvergenceError, DomainError

__all__ = [
    "std_normal_pdf",
    "std_normal_cdf",
    "std_normal_quantile",
    "log_beta",
    "reg_inc_beta",
    "student_t_cdf",
    "student_t_quantile",
    "chi_square_sf",
    "hyp3F2_unit",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def std_normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return _out(np.exp(-0.5 * x * x) / _SQRT_2PI)


def _half_exp_sq(x):
    # exp(-x^2/2) with x^2 split exactly (Dekker), avoiding the rounding of x*x
    c = 134217729.0 * x
    hi = c - (c - x)
    lo = x - hi
    return np.exp(-0.5 * hi * hi) * np.exp(-(hi * lo + 0.5 * lo * lo))


def std_normal_cdf(x):
    """Standard normal distribution function.

    Lower tail (x < -1) as 0.5 erfcx(-x/sqrt 2) exp(-x^2/2) with the Gaussian
    factor evaluated from an exact split of x^2; elsewhere from erfc.
    """
    x = np.asarray(x, dtype=float)
    out = sc.ndtr(x)
    tail = x < -1.0
    if np.any(tail):
        xt = x[tail] if x.ndim else x
        with np.errstate(over="ignore", invalid="ignore"):
            val = 0.5 * sc.erfcx(-xt / math.sqrt(2.0)) * _half_exp_sq(xt)
        val = np.where(np.isfinite(val), val, 0.0)
        if x.ndim:
            out[tail] = val
        else:
            out = val
    return _out(out)


def _probit(p):
    # Inverse normal cdf without domain checks; 0 and 1 map to -inf and +inf.
    p = np.asarray(p, dtype=float)
    x = sc.ndtri(p)
    finite = np.isfinite(x)
    if not np.any(finite):
        return x
    xf = x[finite] if x.ndim else x
    pf = p[finite] if p.ndim else p
    # Halley refinement on the lower tail of whichever side x lies on,
    # so that the residual is computed without cancellation near 1.
    upper = xf > 0
    tail_p = np.where(upper, 1.0 - pf, pf)
    tail_x = np.where(upper, -xf, xf)
    e = sc.ndtr(tail_x) - tail_p
    u = e * _SQRT_2PI * np.exp(0.5 * tail_x * tail_x)
    tail_x = tail_x - u / (1.0 + 0.5 * tail_x * u)
    refined = np.where(upper, -tail_x, tail_x)
    if x.ndim:
        x = x.copy()
        x[finite] = refined
        return x
    return refined


def std_normal_quantile(p):
    """Inverse of the standard normal distribution function on (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("std_normal_quantile requires 0 < p < 1")
    return _out(_probit(p))


def log_beta(a, b):
    """Logarithm of the complete beta function B(a, b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise DomainError("log_beta requires positive arguments")
    return _out(sc.betaln(a, b))


def reg_inc_beta(x, a, b):
    """Regularized incomplete beta function I_x(a, b)."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise DomainError("reg_inc_beta requires a > 0 and b > 0")
    if np.any(~((x >= 0.0) & (x <= 1.0))):
        raise DomainError("reg_inc_beta requires 0 <= x <= 1")
    return _out(sc.betainc(a, b, x))


def student_t_cdf(x, nu):
    """Student t distribution function with ``nu`` degrees of freedom."""
    nu = np.asarray(nu, dtype=float)
    if np.any(~(nu > 0)):
        raise DomainError("student_t_cdf requires nu > 0")
    return _out(sc.stdtr(nu, np.asarray(x, dtype=float)))


def _t_pdf(x, nu):
    logc = sc.gammaln(0.5 * (nu + 1)) - sc.gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi)
    return np.exp(logc - 0.5 * (nu + 1) * np.log1p(x * x / nu))


def student_t_quantile(p, nu, newton_steps=2):
    """Inverse of the Student t distribution function.

    The lower-tail quantile is started from the incomplete-beta
    representation of the t distribution and polished by Newton steps on the
    cdf, each step kept inside the bracket formed by the previous iterate and
    zero.  Upper-tail quantiles follow by symmetry.
    """
    p = np.asarray(p, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("student_t_quantile requires 0 < p < 1")
    if np.any(~(nu > 0)):
        raise DomainError("student_t_quantile requires nu > 0")
    q = np.minimum(p, 1.0 - p)
    x = sc.betaincinv(0.5 * nu, 0.5, 2.0 * q)
    t = -np.sqrt(nu * (1.0 - x) / x)
    for _ in range(newton_steps):
        f = sc.stdtr(nu, t) - q
        d = _t_pdf(t, nu)
        step = np.where(d > 0, f / np.where(d > 0, d, 1.0), 0.0)
        cand = t - step
        # the lower-tail quantile is never positive
        t = np.where(cand <= 0.0, cand, 0.5 * t)
    t = np.where(q == 0.5, 0.0, t)
    return _out(np.where(p > 0.5, -t, t))


def chi_square_sf(x, df):
    """Upper tail probability of the chi-square distribution."""
    x = np.asarray(x, dtype=float)
    df = np.asarray(df, dtype=float)
    if np.any(~(df >= 1)):
        raise DomainError("chi_square_sf requires df >= 1")
    if np.any(x < 0):
        raise DomainError("chi_square_sf requires x >= 0")
    return _out(sc.gammaincc(0.5 * df, 0.5 * x))


def _nonpositive_integer(c):
    return c <= 0 and float(c).is_integer()


def hyp3F2_unit(c1, c2, c3, d1, d2, *, tol=1e-16, max_terms=10**6):
    """Generalized hypergeometric series 3F2(c1, c2, c3; d1, d2; 1).

    Terms are generated by their ratio recurrence.  When the terms fall below
    ``tol`` times the running sum within the first few hundred terms the
    partial sum is returned.  Otherwise the series converges algebraically,
    with remainder R_N ~ N^-s (1 + a_1/N + ...) where s = d1 + d2 - c1 - c2 - c3,
    and the partial sums at N0 * 2^j are Richardson-extrapolated over the
    known exponent ladder s, s+1, s+2, ...; the table entry that changes
    least against its two parents is returned.

    Raises
    ------
    ConvergenceError
        If the series diverges (s <= 0 and it does not terminate), if
        ``max_terms`` is too small for the extrapolation ladder, or if the
        extrapolated values fail to settle.
    """
    cs = (float(c1), float(c2), float(c3))
    ds = (float(d1), float(d2))
    if any(_nonpositive_integer(d) for d in ds):
        raise DomainError("lower parameters must not be non-positive integers")
    terminating = any(_nonpositive_integer(c) for c in cs)
    s = sum(ds) - sum(cs)
    if not terminating and s <= 0:
        raise ConvergenceError(f"3F2 at unit argument diverges (excess {s:g} <= 0)")

    n0, levels = 256, 8
    n_total = n0 * 2**levels
    if n_total > max_terms:
        raise ConvergenceError("max_terms too small for unit-argument 3F2")

    k = np.arange(n_total - 1, dtype=float)
    ratio = (cs[0] + k) * (cs[1] + k) * (cs[2] + k) / ((ds[0] + k) * (ds[1] + k) * (k + 1.0))
    terms = np.empty(n_total)
    terms[0] = 1.0
    np.cumprod(ratio, out=terms[1:])
    if not np.all(np.isfinite(terms)):
        raise ConvergenceError("3F2 terms overflow")
    partial = np.cumsum(terms)

    small = np.abs(terms[1:]) < tol * np.abs(partial[1:])
    hit = np.flatnonzero(small[: n0 - 1])
    if hit.size:
        return math.fsum(terms[: hit[0] + 2])
    if terminating:
        return math.fsum(terms)

    # correctly rounded segment sums keep rounding noise out of the extrapolation
    edges = [0] + [n0 * 2**j for j in range(levels + 1)]
    segs = [math.fsum(terms[a:b]) for a, b in zip(edges[:-1], edges[1:])]
    sums = [math.fsum(segs[: j + 1]) for j in range(levels + 1)]

    # Richardson table over N = n0, 2 n0, ..., n0 2^levels; deep columns
    # amplify rounding, so take the entry with the smallest change
    table = [sums]
    for i in range(1, levels + 1):
        factor = 2.0 ** (s + i - 1)
        prev = table[-1]
        table.append([(factor * prev[j + 1] - prev[j]) / (factor - 1.0) for j in range(len(prev) - 1)])
    best, err = None, math.inf
    for i in range(1, levels + 1):
        for j, v in enumerate(table[i]):
            e = max(abs(v - table[i - 1][j]), abs(v - table[i - 1][j + 1]))
            if e < err:
                best, err = v, e
    if not err <= 1e-10 * max(abs(best), 1.0):
        raise ConvergenceError("3F2 extrapolation did not settle")
    return float(best)
