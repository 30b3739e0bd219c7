"""Loading daily backtest records and screening spurious PIT values.

Records carry a date, the reported PIT, the realized loss and the 99% VaR.
With loss and VaR available the standardized loss Z = Phi^-1(0.99) L / VaR is
backed out and the PIT is regressed on it through H(z) = Phi((z - mu)/sigma).
Residuals are modelled as a symmetric beta on (-1, 1) with variance
1/(tau + 1); records in either tail beyond q/2 are flagged, tau is refitted
without them and the flags of both rounds are combined.
"""

import csv
import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import special_functions as sf
from .errors import DomainError, FitFailure, MissingFields, ParseError, SchemaError
from .series import MISSING, SPURIOUS, VALID, PitSeries

VAR_QUANTILE = sf.std_normal_quantile(0.99)
DEFAULT_Q = 1e-5
MIN_FIT_RECORDS = 30
REQUIRED_COLUMNS = ("date", "pit")
OPTIONAL_COLUMNS = ("loss", "var99", "flag", "imputed_pit")

# residual sd floor: below this the fit is treated as exact
_SD_FLOOR = 1e-8
# above this beta shape the symmetric beta is replaced by its normal limit
_BETA_NORMAL_SWITCH = 1e7


@dataclass
class PitRecord:
    """One trading day; ``pit``, ``loss`` and ``var99`` may be missing (None)."""

    date: dt.date
    pit: float | None = None
    loss: float | None = None
    var99: float | None = None
    flag: str = VALID
    imputed_pit: float | None = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.pit is None and self.flag == VALID:
            self.flag = MISSING
        if self.flag == SPURIOUS and not self.has_backout:
            raise MissingFields("a record can only be flagged spurious when loss and var99 are present")

    @property
    def has_backout(self):
        return self.loss is not None and self.var99 is not None

    @property
    def complete(self):
        return self.pit is not None and self.has_backout


@dataclass
class CleanReport:
    """Outcome of :func:`detect_spurious`."""

    counts: dict
    theta: tuple | None
    tau: list
    q: float
    n_fit: int
    note: str = ""

    def to_dict(self):
        return {
            "counts": dict(self.counts),
            "theta": None if self.theta is None else {"mu": self.theta[0], "sigma": self.theta[1]},
            "tau": list(self.tau),
            "q": self.q,
            "n_fit": self.n_fit,
            "note": self.note,
        }


# ---------------------------------------------------------------------------
# CSV


def _number(text, name, line):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{name} value {text!r} is not a number", line) from None
    if not math.isfinite(v):
        raise ParseError(f"{name} value {text!r} is not finite", line)
    return v


def _parse_row(row, line):
    text = (row.get("date") or "").strip()
    try:
        date = dt.date.fromisoformat(text)
    except ValueError:
        raise ParseError(f"date {text!r} is not an ISO-8601 calendar date", line) from None

    def opt(name):
        cell = row.get(name)
        if cell is None or cell.strip() == "" or cell.strip().upper() == "NA":
            return None
        return _number(cell.strip(), name, line)

    pit = opt("pit")
    if pit is not None and not 0.0 <= pit <= 1.0:
        raise ParseError(f"pit {pit} lies outside [0, 1]", line)
    loss = opt("loss")
    var99 = opt("var99")
    if var99 is not None and var99 <= 0:
        raise ParseError(f"var99 must be positive, got {var99}", line)
    imputed = opt("imputed_pit")
    if imputed is not None and not 0.0 < imputed < 1.0:
        raise ParseError(f"imputed_pit {imputed} lies outside (0, 1)", line)
    flag = (row.get("flag") or "").strip() or VALID
    if flag not in (VALID, MISSING, SPURIOUS):
        raise ParseError(f"unknown flag {flag!r}", line)
    if flag == SPURIOUS and (loss is None or var99 is None):
        raise ParseError("a spurious flag needs loss and var99", line)
    return PitRecord(date, pit, loss, var99, flag, imputed, dict(row))


def load_csv(path):
    """Read records from a CSV file with header ``date,pit[,loss,var99,flag,imputed_pit]``.

    Rows are returned sorted by date.  Error messages give the line number
    in the file (the header is line 1).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: file is empty, a header row is required")
        header = [h.strip() for h in reader.fieldnames]
        reader.fieldnames = header
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {', '.join(missing)}")
        records, lines = [], []
        for row in reader:
            if None in row:
                raise ParseError("too many fields", reader.line_num)
            if all((v or "").strip() == "" for v in row.values()):
                continue
            records.append(_parse_row(row, reader.line_num))
            lines.append(reader.line_num)
    order = sorted(range(len(records)), key=lambda i: (records[i].date, lines[i]))
    out = [records[i] for i in order]
    for prev, cur in zip(order[:-1], order[1:]):
        if records[prev].date == records[cur].date:
            raise ParseError(f"duplicate date {records[cur].date.isoformat()}", max(lines[prev], lines[cur]))
    return out


def write_clean_csv(path, records, flags, imputed):
    """Copy of the input rows with ``flag`` and ``imputed_pit`` columns set.

    ``imputed_pit`` is left empty on valid rows.
    """
    cols = []
    for r in records:
        for c in r.raw:
            if c not in cols and c not in ("flag", "imputed_pit"):
                cols.append(c)
    if not cols:
        cols = ["date", "pit", "loss", "var99"]
    cols += ["flag", "imputed_pit"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r, f, v in zip(records, flags, imputed):
            row = {c: r.raw.get(c, "") for c in cols}
            if not r.raw:
                row.update(date=r.date.isoformat(), pit=_cell(r.pit), loss=_cell(r.loss), var99=_cell(r.var99))
            row["flag"] = f
            row["imputed_pit"] = "" if f == VALID or v is None or math.isnan(v) else format(v, ".17g")
            wr.writerow([row[c] for c in cols])


def _cell(v):
    return "" if v is None else format(v, ".17g")


def to_series(records, flags=None):
    """PitSeries with NaN for missing and spurious records."""
    flags = [r.flag for r in records] if flags is None else list(flags)
    pit = np.array([np.nan if (f != VALID or r.pit is None) else r.pit for r, f in zip(records, flags)])
    dates = np.array([r.date.isoformat() for r in records], dtype=object)
    return PitSeries(pit, dates, np.array(flags, dtype=object))


# ---------------------------------------------------------------------------
# spurious PIT detection


def backout_z(record):
    """Standardized loss Z = Phi^-1(0.99) L / VaR."""
    if record.loss is None or record.var99 is None:
        raise MissingFields(f"{record.date}: loss and var99 are needed to back out Z")
    return VAR_QUANTILE * record.loss / record.var99


def fit_h(z, p):
    """Least-squares fit of p ~ Phi((z - mu)/sigma); returns (mu, sigma)."""
    z = np.asarray(z, dtype=float)
    p = np.asarray(p, dtype=float)

    def resid(theta):
        return sf.std_normal_cdf((z - theta[0]) / theta[1]) - p

    def jac(theta):
        u = (z - theta[0]) / theta[1]
        d = sf.std_normal_pdf(u) / theta[1]
        return np.column_stack([-d, -d * u])

    try:
        res = optimize.least_squares(resid, x0=[0.0, 1.0], jac=jac, method="lm", xtol=1e-10, max_nfev=500)
    except (ValueError, FloatingPointError) as exc:
        raise FitFailure(f"nonlinear least squares failed: {exc}") from None
    mu, sigma = float(res.x[0]), float(res.x[1])
    if res.status <= 0 or not (math.isfinite(mu) and math.isfinite(sigma)) or sigma == 0.0:
        raise FitFailure(f"nonlinear least squares did not converge: {res.message}")
    return mu, abs(sigma)


def h_curve(z, theta):
    """Imputed PIT H(z; theta), kept strictly inside (0, 1)."""
    p = sf.std_normal_cdf((np.asarray(z, dtype=float) - theta[0]) / theta[1])
    return np.clip(p, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def fit_tau(eps):
    """Moment-matched tau = 1/var(eps) - 1 (population variance, sd floored)."""
    var = max(float(np.var(eps)), _SD_FLOOR**2)
    if var >= 1.0:
        raise FitFailure("residual variance is too large for a beta model on (-1, 1)")
    return 1.0 / var - 1.0


def residual_tail(eps, tau):
    """min(B(eps), 1 - B(eps)) for the symmetric beta on (-1, 1) with parameter tau."""
    eps = np.asarray(eps, dtype=float)
    a = 0.5 * tau
    if a > _BETA_NORMAL_SWITCH:
        return special.ndtr(-np.abs(eps) * math.sqrt(tau + 1.0))
    return special.betainc(a, a, 0.5 * (1.0 - np.abs(eps)))


def detect_spurious(records, q=DEFAULT_Q):
    """Flag PITs inconsistent with the fitted back-out curve.

    Returns ``(flags, report)`` with one flag per record.  Records lacking
    any of pit, loss and var99 do not enter the fit.  Records already flagged
    spurious in the input keep that flag and are excluded from the fit.
    With fewer than 30 complete records nothing is flagged.
    """
    if not 0.0 <= q < 1.0:
        raise DomainError("tolerance q must lie in [0, 1)")
    flags = [MISSING if r.pit is None else (SPURIOUS if r.flag == SPURIOUS else VALID) for r in records]
    idx = [i for i, r in enumerate(records) if r.complete and r.flag != SPURIOUS]
    if len(idx) < MIN_FIT_RECORDS:
        return flags, _report(flags, None, [], q, len(idx), f"fewer than {MIN_FIT_RECORDS} complete records; nothing flagged")
    z = np.array([backout_z(records[i]) for i in idx])
    p = np.array([records[i].pit for i in idx])
    theta = fit_h(z, p)
    eps = p - sf.std_normal_cdf((z - theta[0]) / theta[1])
    tau1 = fit_tau(eps)
    hit1 = residual_tail(eps, tau1) < 0.5 * q
    keep = ~hit1
    tau2 = fit_tau(eps[keep]) if keep.sum() >= 2 else tau1
    hit2 = residual_tail(eps, tau2) < 0.5 * q
    for j in np.flatnonzero(hit1 | hit2):
        flags[idx[j]] = SPURIOUS
    return flags, _report(flags, theta, [tau1, tau2], q, len(idx))


def _report(flags, theta, tau, q, n_fit, note=""):
    counts = {k: sum(f == k for f in flags) for k in (VALID, MISSING, SPURIOUS)}
    return CleanReport(counts, theta, tau, q, n_fit, note)


def impute(records, theta_hat, flags=None):
    """Series in which missing and spurious PITs are replaced by H(Z; theta_hat).

    Entries without loss and var99 stay missing; valid PITs are unchanged.
    """
    flags = [r.flag for r in records] if flags is None else list(flags)
    out = np.full(len(records), np.nan)
    for i, (r, f) in enumerate(zip(records, flags)):
        if f == VALID and r.pit is not None:
            out[i] = r.pit
        elif theta_hat is not None and r.has_backout:
            out[i] = h_curve(backout_z(r), theta_hat)
        elif r.imputed_pit is not None:
            out[i] = r.imputed_pit
    dates = np.array([r.date.isoformat() for r in records], dtype=object)
    return PitSeries(out, dates, np.array(flags, dtype=object))
