"""Monte Carlo size and power harness."""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import catalog
from ..errors import ConfigError
from .dgp import DgpSpec, parse_dgp, sample_batch

CSV_COLUMNS = ("dgp", "test", "window", "cvt", "n", "estimate", "se", "n_failed")


@dataclass(frozen=True)
class SimulationSpec:
    """Replication design.

    ``n`` may be a single sample length or a tuple of lengths; shorter samples
    are prefixes of the longest one, so all lengths share replications.
    ``chunk`` fixes how replications are grouped into tasks and does not
    affect results.
    """

    dgps: tuple
    tests: tuple
    n: tuple = (750,)
    reps: int = 10_000
    seed: int = 0
    level: float = 0.05
    chunk: int = 250

    def __post_init__(self):
        object.__setattr__(self, "dgps", tuple(parse_dgp(d) for d in self.dgps))
        object.__setattr__(self, "tests", tuple(self.tests))
        ns = (self.n,) if isinstance(self.n, int) else tuple(int(v) for v in self.n)
        object.__setattr__(self, "n", ns)
        if not self.dgps or not self.tests:
            raise ConfigError("a simulation needs at least one DGP and one test")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if not 0.0 < self.level <= 1.0:
            raise ConfigError("level must lie in (0, 1]")
        if any(v < 2 for v in ns):
            raise ConfigError("sample length must be at least 2")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be a 64-bit non-negative integer")
        if self.chunk < 1:
            raise ConfigError("chunk must be positive")

    def cells(self):
        for d in self.dgps:
            for t in self.tests:
                for n in self.n:
                    yield d, t, n


@dataclass
class PowerRow:
    dgp: str
    test: str
    window: str
    cvt: str
    n: int
    rejections: int
    computed: int
    n_failed: int

    @property
    def estimate(self):
        if self.computed == 0:
            return None
        return 100.0 * self.rejections / self.computed

    @property
    def se(self):
        if self.computed == 0:
            return None
        p = self.rejections / self.computed
        return 100.0 * math.sqrt(p * (1.0 - p) / self.computed)

    def key(self):
        return (self.dgp, self.test, self.window, self.cvt, self.n)


@dataclass
class PowerTable:
    """Rejection percentages with Monte Carlo standard errors."""

    rows: list = field(default_factory=list)
    reps: int = 0
    seed: int = 0
    level: float = 0.05

    def lookup(self, dgp, test, window="narrow", cvt="None", n=750):
        for r in self.rows:
            if r.dgp == dgp and r.test == test and r.window == window and r.cvt == cvt and r.n == n:
                return r
        raise KeyError((dgp, test, window, cvt, n))

    def records(self):
        out = []
        for r in sorted(self.rows, key=PowerRow.key):
            out.append({
                "dgp": r.dgp, "test": r.test, "window": r.window, "cvt": r.cvt, "n": r.n,
                "estimate": r.estimate, "se": r.se, "n_failed": r.n_failed,
            })
        return out

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for rec in self.records():
            wr.writerow([_fmt(rec[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self):
        doc = {"level": self.level, "reps": self.reps, "seed": self.seed, "rows": self.records()}
        return json.dumps(_round_floats(doc), sort_keys=True, indent=2) + "\n"


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _round_floats(obj):
    # 17 significant digits, shortest form that still round-trips
    if isinstance(obj, float):
        return float(format(obj, ".17g")) if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round_floats(v) for v in obj]
    return obj


def _run_chunk(spec, start, stop):
    """Counts (rejections, computed, failed) per cell for replications start..stop-1."""
    nmax = max(spec.n)
    samples = sample_batch(spec.dgps, nmax, spec.seed, start, stop)
    counts = []
    for d, t, n in spec.cells():
        pvals, failed = catalog.evaluate_batch(t, samples[d][:, :n])
        ok = ~failed
        rej = int(np.sum(pvals[ok] <= spec.level))
        counts.append((rej, int(ok.sum()), int(failed.sum())))
    return counts


def _chunks(spec):
    return [(s, min(s + spec.chunk, spec.reps)) for s in range(0, spec.reps, spec.chunk)]


def run_size_power(spec, workers=1):
    """Rejection rates of every (dgp, test, n) cell of ``spec``.

    Replication i always uses ``derive_stream(seed, i)`` and counts are summed
    over fixed chunks, so the table does not depend on ``workers``.  A
    replication whose test is not computable (e.g. a singular regressor
    matrix) is excluded from that cell's denominator and counted in
    ``n_failed``.
    """
    chunks = _chunks(spec)
    if workers is None or workers <= 1 or len(chunks) == 1:
        parts = [_run_chunk(spec, a, b) for a, b in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_run_chunk, spec, a, b) for a, b in chunks]
            parts = [f.result() for f in futs]
    totals = np.sum(np.array(parts, dtype=np.int64), axis=0)
    rows = []
    for (d, t, n), (rej, comp, fail) in zip(spec.cells(), totals):
        rows.append(PowerRow(d.label, t.label, t.window_label, t.cvt_label, n, int(rej), int(comp), int(fail)))
    return PowerTable(rows, spec.reps, spec.seed, spec.level)


def spec_from_dict(block, reps=None, seed=None, level=None):
    """SimulationSpec from the ``simulation`` block of a JSON config."""
    if not isinstance(block, dict):
        raise ConfigError("simulation block must be an object")
    try:
        dgps = tuple(parse_dgp(d) for d in block.get("dgps", ["Normal"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    tests = []
    windows = block.get("windows")
    for entry in block.get("tests", []):
        if isinstance(entry, str):
            entry = {"test": entry}
        cvts = entry.get("cvts", [entry.get("cvt")])
        wins = [entry["window"]] if "window" in entry else (windows or ["narrow"])
        for w in wins:
            for c in cvts:
                tests.append(catalog.config_from_spec({**entry, "window": w, "cvt": c}))
    return SimulationSpec(
        dgps=dgps,
        tests=tuple(tests),
        n=block.get("n", 750),
        reps=int(reps if reps is not None else block.get("reps", 10_000)),
        seed=int(seed if seed is not None else block.get("seed", 0)),
        level=float(level if level is not None else block.get("level", 0.05)),
        chunk=int(block.get("chunk", 250)),
    )


__all__ = ["DgpSpec", "SimulationSpec", "PowerRow", "PowerTable", "run_size_power", "spec_from_dict"]
