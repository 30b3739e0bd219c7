"""Kernel measures on [0, 1] and their moments under uniform PITs.

A kernel measure nu is a finite measure on the unit interval made of point
masses (atoms) and absolutely continuous pieces.  A PIT value p is mapped to
W = G(p) = nu([0, p]), so an atom at alpha contributes its mass whenever
p >= alpha.  Under the null hypothesis P ~ U(0, 1) the moments of W are

    E[W]     = int (1 - u) dnu(u)
    E[W1 W2] = E[W*]  where G* = G1 G2 is the product measure.

Moments are computed in closed form for atoms, beta pieces, pairs of beta
pieces on a common window and the probit pieces of the score-test kernels;
everything else falls back to adaptive quadrature.
"""

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from . import special_functions as sf
from .errors import (
    ConvergenceError,
    DivergentMoment,
    DomainError,
    SingularCovarianceWarning,
    UnsupportedCombination,
    WindowTooLow,
)
from .series import as_pit_array

VAR_LEVEL = 0.99
NARROW = (0.985, 0.995)
WIDE = (0.95, 0.995)

# name -> (a, b, constant multiplying x^(a-1) (1-x)^(b-1) in the unnormalized density)
BETA_FAMILY = {
    "ZU": (1.0, 1.0, 1.0),
    "ZA": (0.5, 0.5, 1.0),
    "ZE": (2.0, 2.0, 4.0),
    "ZL+": (2.0, 1.0, 1.0),
    "ZL-": (1.0, 2.0, 1.0),
}

_QUAD_TOL = 1e-12


def canonical_name(name):
    """Map alternative spellings of kernel and test mnemonics to one form."""
    return str(name).strip().replace("−", "-").upper().replace("HALF", "half")


# ---------------------------------------------------------------------------
# densities


@dataclass(frozen=True)
class Beta:
    """Beta(a, b) density rescaled to the piece window; integrates to one."""

    a: float
    b: float


@dataclass(frozen=True)
class BerkowitzProbit:
    """Density 1/phi(z(u)) with z = Phi^-1, so that G(u) = z(u) - z(alpha1)."""


@dataclass(frozen=True)
class PnsSigma:
    """Density 2 z(u)/phi(z(u)), so that G(u) = z(u)^2 - z(alpha1)^2."""


@dataclass(frozen=True)
class ProductDensity:
    """Absolutely continuous part of the product of two kernel measures."""

    left: "KernelMeasure"
    right: "KernelMeasure"


def _window(window):
    lo, hi = (float(v) for v in window)
    if not (0.0 <= lo < hi <= 1.0):
        raise DomainError(f"window must satisfy 0 <= a1 < a2 <= 1, got ({lo}, {hi})")
    return lo, hi


@dataclass(frozen=True)
class ContinuousPiece:
    """A density supported on ``window`` multiplied by ``scale``."""

    window: tuple
    density: object
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "window", _window(self.window))
        if not self.scale > 0 or not math.isfinite(self.scale):
            raise DomainError("piece scale must be positive and finite")
        d = self.density
        if isinstance(d, Beta):
            if not (d.a > 0 and d.b > 0):
                raise DomainError("beta parameters must be positive")
        elif isinstance(d, (BerkowitzProbit, PnsSigma)):
            if self.window[0] <= 0.0:
                raise DomainError("probit pieces need a window bounded away from 0")
            if isinstance(d, PnsSigma) and sf._probit(self.window[0]) < 0:
                raise DomainError("PnsSigma density is negative below u = 0.5")
        elif not isinstance(d, ProductDensity):
            raise DomainError(f"unknown density {d!r}")

    def cdf(self, u):
        """Mass of the piece on [0, u]."""
        lo, hi = self.window
        u = np.asarray(u, dtype=float)
        d = self.density
        if isinstance(d, Beta):
            x = np.clip((u - lo) / (hi - lo), 0.0, 1.0)
            out = sf.reg_inc_beta(x, d.a, d.b)
        elif isinstance(d, BerkowitzProbit):
            out = sf._probit(np.clip(u, lo, hi)) - sf._probit(lo)
        elif isinstance(d, PnsSigma):
            out = sf._probit(np.clip(u, lo, hi)) ** 2 - sf._probit(lo) ** 2
        else:
            g = d.left.G(u) * d.right.G(u)
            locs, masses = _product_jumps(d.left, d.right)
            cum = np.concatenate([[0.0], np.cumsum(masses)])
            return g - cum[np.searchsorted(locs, u, side="right")]
        return self.scale * np.asarray(out)

    def pdf(self, u):
        """Density of the piece at u (zero outside the window)."""
        lo, hi = self.window
        u = np.asarray(u, dtype=float)
        d = self.density
        if isinstance(d, ProductDensity):
            return d.left.G(u) * d.right.density(u) + d.right.G(u) * d.left.density(u)
        inside = (u >= lo) & (u <= hi)
        uc = np.clip(u, lo, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            if isinstance(d, Beta):
                x = (uc - lo) / (hi - lo)
                logf = (
                    special.xlogy(d.a - 1.0, x)
                    + special.xlog1py(d.b - 1.0, -x)
                    - sf.log_beta(d.a, d.b)
                    - math.log(hi - lo)
                )
                val = np.exp(logf)
            else:
                z = sf._probit(uc)
                val = 1.0 / sf.std_normal_pdf(z)
                if isinstance(d, PnsSigma):
                    val = 2.0 * z * val
        return self.scale * np.where(inside, val, 0.0)

    def breakpoints(self):
        d = self.density
        if isinstance(d, ProductDensity):
            return sorted(set(d.left.breakpoints()) | set(d.right.breakpoints()))
        return list(self.window)

    def mean_term(self):
        """Closed form or quadrature value of int (1 - u) g(u) du."""
        lo, hi = self.window
        d = self.density
        if isinstance(d, Beta):
            return self.scale * ((1.0 - hi) + (hi - lo) * d.b / (d.a + d.b))
        if isinstance(d, (BerkowitzProbit, PnsSigma)):
            anti = _berkowitz_antiderivative if isinstance(d, BerkowitzProbit) else _sigma_antiderivative
            return self.scale * (anti(hi) - anti(lo))
        pair = _single_beta_pair(d.left, d.right)
        if pair is not None:
            (p1, p2) = pair
            w = hi - lo
            m12 = beta_cross_moment(p1.density.a, p1.density.b, p2.density.a, p2.density.b)
            m21 = beta_cross_moment(p2.density.a, p2.density.b, p1.density.a, p1.density.b)
            return p1.scale * p2.scale * ((1.0 - hi) + w * (m12 + m21))
        return _quad(lambda u: (1.0 - u) * self.pdf(u), self.breakpoints())


def _berkowitz_antiderivative(u):
    # d/dz [z (1 - Phi(z)) - phi(z)] = 1 - Phi(z); in u-space this integrates (1-u)/phi(z(u))
    if u >= 1.0:
        return 0.0
    z = sf._probit(u)
    return float(z * sf.std_normal_cdf(-z) - sf.std_normal_pdf(z))


def _sigma_antiderivative(u):
    # d/dz [z^2 (1 - Phi(z)) + Phi(z) - z phi(z)] = 2 z (1 - Phi(z))
    if u >= 1.0:
        return 1.0
    z = sf._probit(u)
    return float(z * z * sf.std_normal_cdf(-z) + sf.std_normal_cdf(z) - z * sf.std_normal_pdf(z))


def _quad(f, breaks):
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(f, lo, hi, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=500)
        if not math.isfinite(val) or err > 1e-8:
            raise DivergentMoment(f"quadrature on [{lo}, {hi}] failed (estimate {val}, error {err})")
        total += val
    return total


# ---------------------------------------------------------------------------
# kernel measures


@dataclass(frozen=True)
class KernelMeasure:
    """Finite measure on [0, 1] made of atoms and continuous pieces.

    Parameters
    ----------
    atoms : sequence of (location, mass)
        Point masses with locations strictly increasing in (0, 1).
    pieces : sequence of ContinuousPiece
        Non-overlapping absolutely continuous parts.
    label : str
        Identifier used in reports.
    """

    atoms: tuple = ()
    pieces: tuple = ()
    label: str = field(default="", compare=False)

    def __post_init__(self):
        atoms = tuple((float(a), float(m)) for a, m in self.atoms)
        pieces = tuple(sorted(self.pieces, key=lambda p: p.window))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pieces", pieces)
        locs = [a for a, _ in atoms]
        if any(not (0.0 < a < 1.0) for a in locs):
            raise DomainError("atom locations must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(locs[:-1], locs[1:])):
            raise DomainError("atom locations must be strictly increasing")
        if any(not (m > 0 and math.isfinite(m)) for _, m in atoms):
            raise DomainError("atom masses must be positive and finite")
        for p, q in zip(pieces[:-1], pieces[1:]):
            if q.window[0] < p.window[1]:
                raise DomainError("continuous pieces must not overlap")
        if not atoms and not pieces:
            raise DomainError("a kernel needs at least one atom or piece")

    @property
    def locations(self):
        return np.array([a for a, _ in self.atoms])

    @property
    def masses(self):
        return np.array([m for _, m in self.atoms])

    def G(self, u):
        """nu([0, u]); atoms count when u >= location."""
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape)
        if self.atoms:
            cum = np.concatenate([[0.0], np.cumsum(self.masses)])
            out = out + cum[np.searchsorted(self.locations, u, side="right")]
        for p in self.pieces:
            out = out + p.cdf(u)
        return out

    def density(self, u):
        """Density of the absolutely continuous part."""
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape)
        for p in self.pieces:
            out = out + p.pdf(u)
        return out

    def atom_mass(self, u):
        for a, m in self.atoms:
            if a == u:
                return m
        return 0.0

    def breakpoints(self):
        pts = {a for a, _ in self.atoms}
        for p in self.pieces:
            pts.update(p.breakpoints())
        return sorted(pts)

    @property
    def support(self):
        pts = self.breakpoints()
        return pts[0], pts[-1]

    @property
    def total_mass(self):
        return float(self.G(1.0))

    @property
    def is_product(self):
        return any(isinstance(p.density, ProductDensity) for p in self.pieces)

    def scaled(self, c):
        """Return the kernel with every mass multiplied by ``c > 0``."""
        if not c > 0:
            raise DomainError("scale factor must be positive")
        return KernelMeasure(
            atoms=tuple((a, c * m) for a, m in self.atoms),
            pieces=tuple(ContinuousPiece(p.window, p.density, c * p.scale) for p in self.pieces),
            label=self.label,
        )


def eval_G(kernel, u):
    """Evaluate G(u) = nu([0, u]) for scalar or array ``u``."""
    return sf._out(kernel.G(u))


def transform_series(kernel, pits):
    """Transform PIT values to W = G(P); missing entries stay NaN."""
    p = as_pit_array(pits)
    out = np.full(p.shape, np.nan)
    ok = ~np.isnan(p)
    out[ok] = kernel.G(p[ok])
    return out


# ---------------------------------------------------------------------------
# products and moments


def _product_jumps(k1, k2):
    locs = sorted({a for a, _ in k1.atoms} | {a for a, _ in k2.atoms})
    out_l, out_m = [], []
    for a in locs:
        d1, d2 = k1.atom_mass(a), k2.atom_mass(a)
        g1, g2 = float(k1.G(a)), float(k2.G(a))
        jump = d1 * (g2 - 0.5 * d2) + d2 * (g1 - 0.5 * d1)
        if jump > 0:
            out_l.append(a)
            out_m.append(jump)
    return np.array(out_l), np.array(out_m)


def product_measure(k1, k2):
    """Kernel measure whose distribution function is G1 * G2.

    Atom masses follow the jump formula d1 (G2 - d2/2) + d2 (G1 - d1/2) at each
    atom location; the continuous part has density G1 g2 + G2 g1.

    Raises
    ------
    UnsupportedCombination
        If either factor is itself a product.
    """
    if k1.is_product or k2.is_product:
        raise UnsupportedCombination("products of product measures are not represented")
    locs, masses = _product_jumps(k1, k2)
    pieces = ()
    if k1.pieces or k2.pieces:
        lo = min(k1.support[0], k2.support[0])
        hi = max(k1.support[1], k2.support[1])
        pieces = (ContinuousPiece((lo, hi), ProductDensity(k1, k2)),)
    return KernelMeasure(tuple(zip(locs, masses)), pieces, label=f"{k1.label}*{k2.label}")


def _single_beta_pair(k1, k2):
    if k1.atoms or k2.atoms or len(k1.pieces) != 1 or len(k2.pieces) != 1:
        return None
    p1, p2 = k1.pieces[0], k2.pieces[0]
    if isinstance(p1.density, Beta) and isinstance(p2.density, Beta) and p1.window == p2.window:
        return p1, p2
    return None


@functools.lru_cache(maxsize=512)
def mean_W(kernel):
    """E[G(P)] for P uniform: sum of atom masses times (1 - alpha) plus piece terms."""
    total = sum(m * (1.0 - a) for a, m in kernel.atoms)
    for p in kernel.pieces:
        total += p.mean_term()
    return float(total)


@functools.lru_cache(maxsize=512)
def cross_moment(k1, k2):
    """E[G1(P) G2(P)] for P uniform."""
    try:
        return mean_W(product_measure(k1, k2))
    except UnsupportedCombination:
        breaks = sorted(set(k1.breakpoints()) | set(k2.breakpoints()) | {0.0, 1.0})
        return _quad(lambda u: float(k1.G(u) * k2.G(u)), breaks)


def second_moment(kernel):
    """E[G(P)^2] for P uniform."""
    return cross_moment(kernel, kernel)


def variance_W(kernel):
    return second_moment(kernel) - mean_W(kernel) ** 2


@dataclass(frozen=True, eq=False)
class MomentSet:
    """Null mean vector and second-moment matrix of a set of kernels."""

    mu: np.ndarray
    cross: np.ndarray
    singular: bool = False

    @property
    def cov(self):
        return self.cross - np.outer(self.mu, self.mu)

    @property
    def sigma2(self):
        return np.diag(self.cov).copy()

    @property
    def mu_W(self):
        return self.mu

    @property
    def sigma2_W(self):
        return self.sigma2


def _is_singular(cov):
    eig = np.linalg.eigvalsh(cov)
    top = float(np.max(np.abs(eig)))
    return top == 0.0 or float(eig[0]) <= top * 1e-12


def moment_set(mu, cov):
    """Build a MomentSet from a mean vector and covariance matrix."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    return MomentSet(mu, cov + np.outer(mu, mu), _is_singular(cov))


def cov_matrix(kernels):
    """Mean vector and covariance of (G_1(P), ..., G_m(P)) for uniform P.

    A :class:`SingularCovarianceWarning` is issued and ``singular`` set when
    the condition number exceeds 1e12.
    """
    kernels = list(kernels)
    m = len(kernels)
    mu = np.array([mean_W(k) for k in kernels])
    cross = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            cross[i, j] = cross[j, i] = cross_moment(kernels[i], kernels[j])
    cov = cross - np.outer(mu, mu)
    if np.linalg.eigvalsh(cov)[0] < -1e-10 * max(1.0, float(np.max(np.abs(cov)))):
        raise DivergentMoment("kernel covariance matrix is not positive semidefinite")
    singular = _is_singular(cov)
    if singular:
        labels = ", ".join(k.label or "?" for k in kernels)
        warnings.warn(f"covariance of kernels ({labels}) is singular", SingularCovarianceWarning, stacklevel=2)
    return MomentSet(mu, cross, singular)


def beta_cross_moment(a1, b1, a2, b2):
    """M = int_0^1 (1 - x) f1(x) F2(x) dx for Beta densities f1 and cdf F2.

    Evaluated through the all-positive-parameter hypergeometric form

        B(a1+a2, 1+b1+b2) / (a2 B(a1,b1) B(a2,b2))
            * 3F2(1, a1+a2, a2+b2; 1+a2, 1+a1+a2+b1+b2; 1).
    """
    for v in (a1, b1, a2, b2):
        if not v > 0:
            raise DomainError("beta_cross_moment requires positive parameters")
    logc = (
        sf.log_beta(a1 + a2, 1.0 + b1 + b2)
        - math.log(a2)
        - sf.log_beta(a1, b1)
        - sf.log_beta(a2, b2)
    )
    h = sf.hyp3F2_unit(1.0, a1 + a2, a2 + b2, 1.0 + a2, 1.0 + a1 + a2 + b1 + b2)
    return math.exp(logc) * h


# ---------------------------------------------------------------------------
# constructors


def dirac_kernel(alpha, mass=1.0, label=None):
    """Point mass at ``alpha``: W is the exceedance indicator 1{P >= alpha}."""
    return KernelMeasure(((alpha, mass),), label=label or f"BIN({alpha:g})")


def discrete_kernel(levels, weights=None, label=None):
    """Sum of point masses at increasing ``levels`` (unit weights by default)."""
    levels = [float(a) for a in levels]
    weights = [1.0] * len(levels) if weights is None else [float(w) for w in weights]
    if len(weights) != len(levels):
        raise DomainError("levels and weights differ in length")
    return KernelMeasure(tuple(zip(levels, weights)), label=label or f"ZU{len(levels)}")


def indicator_kernels(levels):
    """One Dirac kernel per level; jointly they give the multinomial test."""
    return [dirac_kernel(a, label=f"1{{P>={a:g}}}") for a in levels]


def beta_kernel(a, b, window, normalized=False, constant=1.0, label=None):
    """Beta-shaped kernel on ``window``.

    With ``normalized=True`` the total mass is one.  Otherwise the density is
    ``constant * x^(a-1) (1-x)^(b-1)`` in the window coordinate x, so the total
    mass is ``constant * (a2 - a1) * B(a, b)``.
    """
    lo, hi = _window(window)
    scale = 1.0 if normalized else constant * (hi - lo) * math.exp(sf.log_beta(a, b))
    piece = ContinuousPiece((lo, hi), Beta(float(a), float(b)), scale)
    return KernelMeasure((), (piece,), label=label or f"Beta({a:g},{b:g})")


def builtin_kernel(name, window=NARROW, normalized=False):
    """One of the named beta kernels ZU, ZA, ZE, ZL+, ZL- on ``window``."""
    key = canonical_name(name)
    if key not in BETA_FAMILY:
        raise DomainError(f"unknown beta kernel {name!r}")
    a, b, c = BETA_FAMILY[key]
    return beta_kernel(a, b, window, normalized=normalized, constant=c, label=key)


def berkowitz_kernel(alpha1, alpha2=1.0, label="Berkowitz"):
    """Kernel with G(u) = Phi^-1(alpha1 v u) - Phi^-1(alpha1), capped at alpha2."""
    return KernelMeasure((), (ContinuousPiece((alpha1, alpha2), BerkowitzProbit()),), label=label)


def discrete_levels(window, count):
    """Levels of the discrete kernels: window ends and the VaR level, plus midpoints for 5."""
    lo, hi = _window(window)
    if not lo < VAR_LEVEL < hi:
        raise DomainError("discrete level sets need the window to contain 0.99")
    if count == 3:
        return (lo, VAR_LEVEL, hi)
    if count == 5:
        return (lo, 0.5 * (lo + VAR_LEVEL), VAR_LEVEL, 0.5 * (VAR_LEVEL + hi), hi)
    raise DomainError("discrete kernels are defined for 3 or 5 levels")


def sample_G(kernel, num=101):
    """Grid over the kernel support and G evaluated on it."""
    lo, hi = kernel.support
    u = np.linspace(lo, hi, num)
    return u, kernel.G(u)


# ---------------------------------------------------------------------------
# truncated probitnormal score kernels


def _z0_equation(z):
    return z * z + sf.std_normal_pdf(z) / sf.std_normal_cdf(z) * z - 1.0


@functools.lru_cache(maxsize=1)
def solve_z0():
    """Root of z^2 + (phi(z)/Phi(z)) z - 1 = 0 bracketed on [0, 2]."""
    z = optimize.brentq(_z0_equation, 0.0, 2.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(_z0_equation(z)) > 1e-12:
        raise ConvergenceError("z0 root not resolved to 1e-12")
    return float(z)


def _check_pns_window(alpha1, alpha2):
    if not (0.0 < alpha1 < alpha2 <= 1.0):
        raise DomainError("score-test window must satisfy 0 < a1 < a2 <= 1")
    if alpha1 < sf.std_normal_cdf(solve_z0()):
        raise WindowTooLow(
            f"alpha1 = {alpha1} is below Phi(z0) = {sf.std_normal_cdf(solve_z0()):.6f}"
        )


def psi_lower(alpha1):
    """Score contribution of a PIT censored at alpha1."""
    z = sf._probit(alpha1)
    f = sf.std_normal_pdf(z)
    return np.array([-f / alpha1, -f * z / alpha1])


def psi_upper(alpha2):
    """Score contribution of a PIT censored at alpha2 (< 1)."""
    z = sf._probit(alpha2)
    f = sf.std_normal_pdf(z)
    return np.array([f / (1.0 - alpha2), f * z / (1.0 - alpha2)])


def psi_star(u):
    """Score contribution of an interior PIT: (z, z^2 - 1) with z = Phi^-1(u)."""
    z = sf._probit(u)
    return np.stack([z, z * z - 1.0], axis=-1)


def pns_kernel(alpha1, alpha2):
    """The two kernels whose bispectral Z-test is the probitnormal score test.

    Returns
    -------
    (KernelMeasure, KernelMeasure, numpy.ndarray)
        Location and scale kernels and their null mean vector -psi_lower(alpha1).
    """
    _check_pns_window(alpha1, alpha2)
    low = psi_star(alpha1) - psi_lower(alpha1)
    high = psi_upper(alpha2) - psi_star(alpha2) if alpha2 < 1.0 else np.zeros(2)
    kernels = []
    for i, (dens, lab) in enumerate(((BerkowitzProbit(), "PNS-mu"), (PnsSigma(), "PNS-sigma"))):
        atoms = [(a, m) for a, m in ((alpha1, low[i]), (alpha2, high[i])) if m > 0 and a < 1.0]
        kernels.append(KernelMeasure(tuple(atoms), (ContinuousPiece((alpha1, alpha2), dens),), label=lab))
    return kernels[0], kernels[1], -psi_lower(alpha1)


def pns_fisher_information(alpha1, alpha2):
    """Information matrix at (mu, sigma) = (0, 1) of the censored probitnormal model."""
    a, b = float(alpha1), float(alpha2)
    z1 = sf._probit(a)
    f1 = sf.std_normal_pdf(z1)
    if b < 1.0:
        z2 = sf._probit(b)
        f2 = sf.std_normal_pdf(z2)
        t11 = f2 * f2 / (1.0 - b)
        t22 = f2 * f2 * z2 * z2 / (1.0 - b)
        t12 = f2 * f2 * z2 / (1.0 - b)
        fz2, fz2_3, f2_1z2 = f2 * z2, f2 * z2**3, f2 * (1.0 + z2 * z2)
    else:
        t11 = t22 = t12 = fz2 = fz2_3 = f2_1z2 = 0.0
    i11 = f1 * f1 / a + t11 + f1 * z1 - fz2 + (b - a)
    i22 = f1 * f1 * z1 * z1 / a + f1 * z1**3 + f1 * z1 + t22 - fz2_3 - fz2 + 2.0 * (b - a)
    i12 = f1 * f1 * z1 / a + f1 * (1.0 + z1 * z1) + t12 - f2_1z2
    return np.array([[i11, i12], [i12, i22]])


def pns_moments(alpha1, alpha2):
    """Closed-form null moments of the two score kernels."""
    _check_pns_window(alpha1, alpha2)
    return moment_set(-psi_lower(alpha1), pns_fisher_information(alpha1, alpha2))
