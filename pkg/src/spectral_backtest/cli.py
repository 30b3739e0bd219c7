"""Command-line interface: ``spectral-backtest {backtest,simulate,clean,kernels}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import catalog
from . import ingestion as ig
from . import kernels as kn
from .errors import BacktestError, ConfigError, DataError, SingularCovariance
from .series import VALID
from .simulation import harness, presets

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

RESULT_COLUMNS = ("portfolio", "test_id", "window", "cvt", "statistic", "df", "p_value", "n_used", "reject", "warnings")


# ---------------------------------------------------------------------------
# output helpers


def _clean(obj):
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(format(v, ".17g")) if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _cell(v):
    if v is None:
        return "NA"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g") if math.isfinite(v) else "NA"
    if isinstance(v, (list, tuple)):
        return "; ".join(str(x) for x in v)
    return str(v)


def _csv_text(columns, rows):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _emit(out_dir, stem, fmt, columns, rows, doc=None):
    written = []
    if fmt in ("csv", "both"):
        p = out_dir / f"{stem}.csv"
        _write(p, _csv_text(columns, rows))
        written.append(p)
    if fmt in ("json", "both"):
        p = out_dir / f"{stem}.json"
        _write(p, dumps(doc if doc is not None else rows))
        written.append(p)
    return written


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _out_dir(args):
    d = Path(args.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _level(args, cfg):
    level = args.level if args.level is not None else cfg.get("level", 0.05)
    if not 0.0 < float(level) <= 1.0:
        raise ConfigError("level must lie in (0, 1]")
    return float(level)


def _q(args, cfg):
    q = args.q if args.q is not None else cfg.get("q", ig.DEFAULT_Q)
    if not 0.0 <= float(q) < 1.0:
        raise ConfigError("q must lie in [0, 1)")
    return float(q)


# ---------------------------------------------------------------------------
# backtest


def _expand_tests(cfg):
    entries = cfg.get("tests")
    if not entries:
        raise ConfigError("backtest config needs a non-empty 'tests' list")
    windows = cfg.get("windows", ["narrow"])
    out = []
    for e in entries:
        e = {"test": e} if isinstance(e, str) else dict(e)
        if "kernel" in e:
            out.append(catalog.config_from_spec(e))
            continue
        wins = [e["window"]] if "window" in e else windows
        cvts = e.pop("cvts", [e.get("cvt")])
        for w in wins:
            for c in cvts:
                out.append(catalog.config_from_spec({**e, "window": w, "cvt": c}))
    return out


def prepare_portfolio(path, q):
    """PIT series for dependent observations and the imputed series for lags."""
    records = ig.load_csv(path)
    if not records:
        raise DataError(f"{path}: no data rows")
    has_flags = any("flag" in r.raw and r.raw["flag"].strip() for r in records)
    if has_flags:
        flags = [r.flag for r in records]
        imputed = ig.impute(records, None, flags)
        report = None
    elif any(r.complete for r in records):
        flags, report = ig.detect_spurious(records, q)
        imputed = ig.impute(records, report.theta, flags)
    else:
        flags = [r.flag for r in records]
        imputed, report = None, None
    return records, ig.to_series(records, flags), imputed, report


def edf_points(pits, window, portfolio):
    """Sorted PITs inside ``window`` with the empirical cdf of the full sample."""
    p = np.sort(pits[~np.isnan(pits)])
    n = p.size
    lo, hi = window
    rows = []
    for i, u in enumerate(p):
        if lo <= u <= hi:
            rows.append({"portfolio": portfolio, "window": catalog.window_name(window), "pit": float(u), "edf": (i + 1) / n})
    return rows


def cmd_backtest(args):
    cfg = _load_config(args.config)
    level = _level(args, cfg)
    q = _q(args, cfg)
    inputs = list(args.input or []) or list(cfg.get("inputs", []))
    if not inputs:
        raise ConfigError("no input files; pass --input or list 'inputs' in the config")
    tests = _expand_tests(cfg)
    out_dir = _out_dir(args)
    rows, edf_rows, clean_reports = [], [], {}
    for path in inputs:
        name = Path(path).stem
        _, series, imputed, report = prepare_portfolio(path, q)
        if report is not None:
            clean_reports[name] = report.to_dict()
        for t in tests:
            row = {"portfolio": name, "test_id": t.label, "window": t.window_label, "cvt": t.cvt_label}
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                try:
                    res = catalog.run_test(t, series, imputed)
                except SingularCovariance as exc:
                    row.update(statistic=None, df=None, p_value=None, n_used=None, reject=None,
                               warnings=[f"NA: {exc}"])
                    rows.append(row)
                    continue
            notes = list(res.warnings)
            for w in caught:
                msg = str(w.message)
                if msg not in notes:
                    notes.append(msg)
            row.update(statistic=res.statistic, df=res.df, p_value=res.p_value, n_used=res.n_used,
                       reject=bool(res.p_value <= level), warnings=notes)
            rows.append(row)
        seen = []
        for t in tests:
            if t.window not in seen and t.test != "Z":
                seen.append(t.window)
        for w in seen or [kn.NARROW]:
            edf_rows.extend(edf_points(series.pit, w, name))
    rows.sort(key=lambda r: (r["portfolio"], r["test_id"], r["window"], r["cvt"]))
    doc = {"level": level, "q": q, "results": rows, "clean": clean_reports}
    _emit(out_dir, "results", args.format, RESULT_COLUMNS, rows, doc)
    _emit(out_dir, "edf", args.format, ("portfolio", "window", "pit", "edf"), edf_rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    cfg = _load_config(args.config)
    block = cfg.get("simulation", cfg)
    reps = args.reps if args.reps is not None else block.get("reps", 10_000)
    seed = args.seed if args.seed is not None else block.get("seed", 0)
    level = _level(args, block)
    if args.paper_table:
        spec = presets.preset_spec(args.paper_table, reps=int(reps), seed=int(seed), level=level,
                                   chunk=int(block.get("chunk", 250)))
    else:
        if not block.get("tests"):
            raise ConfigError("simulate needs --paper-table or a 'simulation' block with tests")
        spec = harness.spec_from_dict(block, reps=reps, seed=seed, level=level)
    workers = args.workers if args.workers is not None else int(block.get("workers", 1))
    table = harness.run_size_power(spec, workers=workers)
    out_dir = _out_dir(args)
    if args.format in ("csv", "both"):
        _write(out_dir / "power_table.csv", table.to_csv())
    if args.format in ("json", "both"):
        _write(out_dir / "power_table.json", table.to_json())
    return EXIT_OK


# ---------------------------------------------------------------------------
# clean


def cmd_clean(args):
    cfg = _load_config(args.config)
    q = _q(args, cfg)
    inputs = list(args.input or []) or list(cfg.get("inputs", []))
    if not inputs:
        raise ConfigError("no input files; pass --input or list 'inputs' in the config")
    out_dir = _out_dir(args)
    for path in inputs:
        records = ig.load_csv(path)
        if not any(r.has_backout for r in records):
            raise ig.SchemaError(f"{path}: cleaning needs loss and var99 columns")
        # flags present in the input are recomputed, not inherited
        for r in records:
            r.flag = VALID if r.pit is not None else ig.MISSING
        flags, report = ig.detect_spurious(records, q)
        imputed = ig.impute(records, report.theta, flags).pit
        imputed = [None if (f == VALID or math.isnan(v)) else v for f, v in zip(flags, imputed)]
        stem = Path(path).stem
        ig.write_clean_csv(out_dir / f"{stem}_clean.csv", records, flags, imputed)
        _write(out_dir / f"{stem}_clean_report.json", dumps(report.to_dict()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# kernels


def _kernel_entries(cfg):
    specs = cfg.get("kernels")
    if not specs:
        raise ConfigError("kernels config needs a non-empty 'kernels' list")
    out = []
    for s in specs:
        if isinstance(s, str):
            s = {"family": s}
        out.append(catalog.kernel_from_spec(s))
    return out


def cmd_kernels(args):
    cfg = _load_config(args.config)
    ks = _kernel_entries(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        joint = kn.cov_matrix(ks)
    notes = [str(w.message) for w in caught]
    for n in notes:
        print(f"warning: {n}", file=sys.stderr)
    listing = []
    for i, k in enumerate(ks):
        u, g = kn.sample_G(k, 101)
        listing.append({
            "label": k.label,
            "support": list(k.support),
            "mu": joint.mu[i],
            "sigma2": joint.cov[i, i],
            "G": {"u": u.tolist(), "G": g.tolist()},
        })
    doc = {
        "kernels": listing,
        "mu": joint.mu.tolist(),
        "cov": joint.cov.tolist(),
        "singular": bool(joint.singular),
        "warnings": notes,
    }
    text = dumps(doc)
    sys.stdout.write(text)
    if args.output_dir:
        out_dir = _out_dir(args)
        if args.format in ("json", "both"):
            _write(out_dir / "kernels.json", text)
        if args.format in ("csv", "both"):
            rows = []
            for item in listing:
                for uu, gg in zip(item["G"]["u"], item["G"]["G"]):
                    rows.append({"label": item["label"], "u": uu, "G": gg})
            _write(out_dir / "kernels_G.csv", _csv_text(("label", "u", "G"), rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="spectral-backtest", description="Spectral backtests of PIT values.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output_required=True):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--output-dir", default=None if not output_required else "out",
                       help="directory for report files (default: ./out)")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both")
        p.add_argument("--level", type=float, help="rejection level (default 0.05)")

    p = sub.add_parser("backtest", help="run backtests on PIT CSV files")
    common(p)
    p.add_argument("--input", action="append", help="input CSV (repeatable, one portfolio per file)")
    p.add_argument("--q", type=float, help="spurious-PIT tolerance (default 1e-5)")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("simulate", help="Monte Carlo size and power")
    common(p)
    p.add_argument("--reps", type=int, help="replications (default 10000)")
    p.add_argument("--seed", type=int, help="64-bit seed")
    p.add_argument("--paper-table", choices=presets.PRESETS,
                   help="run one of the reference table presets: " + ", ".join(presets.PRESETS))
    p.add_argument("--workers", type=int, help="worker processes (results do not depend on this)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("clean", help="flag spurious PIT values and impute")
    common(p)
    p.add_argument("--input", action="append", help="input CSV with loss and var99 columns")
    p.add_argument("--q", type=float, help="tolerance (default 1e-5; 0 disables flagging)")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("kernels", help="moments and G samples of kernel measures")
    common(p, output_required=False)
    p.set_defaults(func=cmd_kernels)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except BacktestError as exc:
        report = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        sys.stderr.write(dumps(report))
        return exc.exit_code
    except FileNotFoundError as exc:
        sys.stderr.write(dumps({"error": "FileNotFound", "message": str(exc), "exit_code": EXIT_DATA}))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
