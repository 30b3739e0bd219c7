"""PIT data-generating processes.

Losses L_t are drawn from a true distribution F (standard normal or a
unit-variance Student t) and reported through the standard normal model, so
P_t = Phi(L_t).  Serial dependence comes from a Gaussian ARMA(1,1) process Z_t
mapped to uniforms U_t whose V-transform |2U_t - 1| equals Phi(Z_t).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .. import special_functions as sf
from ..errors import DomainError
from ..series import PitSeries

BURN_IN = 1000
_TINY = 2.0**-54


def derive_stream(seed, index):
    """Independent generator for replication ``index`` under ``seed``.

    Philox is counter based and keyed through SeedSequence spawn keys, so the
    stream depends only on (seed, index).
    """
    if seed < 0 or index < 0:
        raise DomainError("seed and index must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


@dataclass(frozen=True)
class DgpSpec:
    """True loss distribution and dynamics; ``nu = None`` means standard normal."""

    nu: float | None = None
    ar: float | None = None
    ma: float | None = None

    def __post_init__(self):
        if self.nu is not None and not self.nu > 2:
            raise DomainError("scaled Student t needs nu > 2 for unit variance")
        if (self.ar is None) != (self.ma is None):
            raise DomainError("ARMA dynamics need both ar and ma")
        if self.ar is not None:
            if not abs(self.ar) < 1:
                raise DomainError("ARMA(1,1) needs |ar| < 1")
            if 1.0 + 2.0 * self.ar * self.ma + self.ma**2 <= 0:
                raise DomainError("ARMA parameters give a degenerate process")

    @property
    def is_arma(self):
        return self.ar is not None

    @property
    def scale(self):
        return 1.0 if self.nu is None else math.sqrt((self.nu - 2.0) / self.nu)

    @property
    def label(self):
        marg = "Normal" if self.nu is None else f"ScaledT({self.nu:g})"
        dyn = "IID" if self.ar is None else f"ARMA({self.ar:g},{self.ma:g})"
        return f"{marg}/{dyn}"

    @property
    def innovation_sd(self):
        """Innovation sd giving the ARMA(1,1) process unit variance."""
        phi, theta = self.ar, self.ma
        return math.sqrt((1.0 - phi * phi) / (1.0 + 2.0 * phi * theta + theta * theta))

    def rho1(self):
        """Lag-one autocorrelation of the ARMA(1,1) process."""
        phi, theta = self.ar, self.ma
        return (1.0 + phi * theta) * (phi + theta) / (1.0 + 2.0 * phi * theta + theta * theta)


def parse_dgp(value):
    """DgpSpec from a label such as "Normal", "t5" or "ScaledT(3)/ARMA(0.95,-0.85)", or a dict."""
    if isinstance(value, DgpSpec):
        return value
    if isinstance(value, dict):
        return DgpSpec(value.get("nu"), value.get("ar"), value.get("ma"))
    text = str(value).replace(" ", "")
    marg, _, dyn = text.partition("/")
    low = marg.lower()
    if low in ("normal", "n"):
        nu = None
    elif low.startswith("scaledt(") and low.endswith(")"):
        nu = float(low[8:-1])
    elif low.startswith("scaledt"):
        nu = float(low[7:])
    elif low.startswith("t"):
        nu = float(low[1:])
    else:
        raise DomainError(f"unknown marginal {marg!r}")
    if dyn == "" or dyn.lower() == "iid":
        return DgpSpec(nu)
    dl = dyn.lower()
    if dl.startswith("arma(") and dl.endswith(")"):
        ar, ma = (float(v) for v in dl[5:-1].split(","))
        return DgpSpec(nu, ar, ma)
    raise DomainError(f"unknown dynamics {dyn!r}")


def uniform_to_loss(dgp, u, upper=None):
    """L = F^-1(U) for the DGP marginal; ``upper`` optionally holds 1 - U."""
    u = np.asarray(u, dtype=float)
    if upper is None:
        upper = 1.0 - u
    q = np.minimum(u, upper)
    if dgp.nu is None:
        tq = sf.std_normal_quantile(q)
    else:
        tq = sf.student_t_quantile(q, dgp.nu) * dgp.scale
    return np.where(u > 0.5, -tq, tq)


def uniform_to_pit(dgp, u, upper=None):
    """Map uniforms through L = F^-1(U), P = Phi(L).

    ``upper`` optionally holds 1 - U computed without cancellation.  For the
    normal marginal P = U exactly.
    """
    u = np.asarray(u, dtype=float)
    if dgp.nu is None:
        return u
    return sf.std_normal_cdf(uniform_to_loss(dgp, u, upper))


def _iid_uniforms(stream, n):
    u = stream.random(n)
    return np.where(u == 0.0, _TINY, u)


def _arma_draws(dgp, stream, n):
    g = stream.standard_normal(BURN_IN + n + 2)
    b = stream.random(n) < 0.5
    return g, b


def _arma_path(dgp, g, n):
    # g = [xi, e0, e_1 .. e_{burn+n}] along the last axis (standard normals)
    se = dgp.innovation_sd
    xi, e0 = g[..., 0], se * g[..., 1]
    e = se * g[..., 2:]
    z0 = e0 + math.sqrt(max(1.0 - se * se, 0.0)) * xi
    zi = (dgp.ar * z0 + dgp.ma * e0)[..., None]
    z, _ = signal.lfilter([1.0, dgp.ma], [1.0, -dgp.ar], e, axis=-1, zi=zi)
    return z[..., BURN_IN:]


def _arma_uniforms(z, b):
    # |2U - 1| = Phi(Z): U = (1 + Phi(Z)) / 2 when B = 1, (1 - Phi(Z)) / 2 otherwise
    lo = 0.5 * sf.std_normal_cdf(-z)
    u = np.where(b, 1.0 - lo, lo)
    upper = np.where(b, lo, 1.0 - lo)
    return u, upper


def sample_arma_z(dgp, n, stream):
    """The underlying unit-variance ARMA(1,1) path of length ``n``."""
    g, _ = _arma_draws(dgp, stream, n)
    return _arma_path(dgp, g, n)


def sample_pits_iid(dgp, n, stream):
    """iid PITs P_t = Phi(L_t) with L_t ~ F."""
    if dgp.is_arma:
        raise DomainError("sample_pits_iid needs iid dynamics")
    return PitSeries(uniform_to_pit(dgp, _iid_uniforms(stream, n)))


def sample_pits_arma(dgp, n, stream):
    """PITs whose V-transform follows a Gaussian ARMA(1,1) process."""
    if not dgp.is_arma:
        raise DomainError("sample_pits_arma needs ARMA dynamics")
    g, b = _arma_draws(dgp, stream, n)
    u, upper = _arma_uniforms(_arma_path(dgp, g, n), b)
    return PitSeries(uniform_to_pit(dgp, u, upper))


def sample_losses(dgp, n, stream):
    """The losses L_t behind :func:`sample_pits` (same draws, same stream use)."""
    if dgp.is_arma:
        g, b = _arma_draws(dgp, stream, n)
        u, upper = _arma_uniforms(_arma_path(dgp, g, n), b)
        return uniform_to_loss(dgp, u, upper)
    return uniform_to_loss(dgp, _iid_uniforms(stream, n))


def sample_pits(dgp, n, stream):
    return sample_pits_arma(dgp, n, stream) if dgp.is_arma else sample_pits_iid(dgp, n, stream)


def sample_batch(dgps, n, seed, start, stop):
    """PIT matrices for replications ``start..stop-1`` of every DGP.

    Each replication draws from :func:`derive_stream` (seed, index) only, so
    row i equals ``sample_pits(dgp, n, derive_stream(seed, start + i))``.
    Different DGPs share the underlying draws (common random numbers).
    """
    reps = range(start, stop)
    out = {}
    iid = [d for d in dgps if not d.is_arma]
    arma = [d for d in dgps if d.is_arma]
    if iid:
        u = np.stack([_iid_uniforms(derive_stream(seed, i), n) for i in reps])
        for d in iid:
            out[d] = uniform_to_pit(d, u)
    if arma:
        draws = [_arma_draws(None, derive_stream(seed, i), n) for i in reps]
        g = np.stack([x[0] for x in draws])
        b = np.stack([x[1] for x in draws])
        paths = {}
        for d in arma:
            key = (d.ar, d.ma)
            if key not in paths:
                paths[key] = _arma_uniforms(_arma_path(d, g, n), b)
            out[d] = uniform_to_pit(d, *paths[key])
    return out
