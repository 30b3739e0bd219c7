"""Preset simulation grids and their published reference rejection rates.

Each preset builds a :class:`SimulationSpec`; ``reference_values(name)``
returns the matching reference percentages keyed like :class:`PowerRow`
(dgp, test, window, cvt, n).  Reference rates were estimated from 65536
replications.
"""

from .. import catalog
from ..conditional import make_cvt
from ..errors import ConfigError
from .dgp import DgpSpec
from .harness import SimulationSpec

REFERENCE_REPS = 65536
ARMA = (0.95, -0.85)

NORMAL = DgpSpec()
T5 = DgpSpec(5.0)
T3 = DgpSpec(3.0)
NORMAL_ARMA = DgpSpec(None, *ARMA)
T5_ARMA = DgpSpec(5.0, *ARMA)
T3_ARMA = DgpSpec(3.0, *ARMA)

CVT_NAMES = ("None", "EM1", "EM2", "MD4", "MDhalf")

_T2_TESTS = ("BIN", "ZU3", "PE3", "ZU", "ZA", "ZE", "ZL+", "ZL-", "ZLL", "PNS")
_T2 = {
    "narrow": {
        NORMAL: (6.1, 4.9, 5.3, 4.7, 4.7, 4.7, 4.6, 4.8, 4.8, 4.9),
        T5: (33.9, 35.0, 40.3, 33.8, 34.4, 33.0, 40.3, 27.1, 40.0, 44.7),
        T3: (24.0, 24.8, 43.4, 23.9, 24.3, 23.3, 32.7, 16.5, 43.3, 50.5),
    },
    "wide": {
        NORMAL: (6.1, 5.0, 5.1, 4.9, 4.9, 4.9, 4.9, 4.9, 5.0, 5.0),
        T5: (33.9, 10.7, 55.5, 6.4, 6.6, 6.1, 11.9, 5.8, 45.1, 57.5),
        T3: (24.0, 13.5, 90.6, 17.7, 20.4, 15.4, 7.4, 31.9, 85.8, 93.1),
    },
}

_S1_TESTS = ("BIN", "ZU3", "ZU5", "PE3", "PE5")
_S1 = {
    "narrow": {
        NORMAL: (6.1, 4.9, 4.6, 5.3, 5.9),
        T5: (33.9, 35.0, 34.0, 40.3, 33.5),
        T3: (24.0, 24.8, 24.1, 43.4, 33.5),
    },
    "wide": {
        NORMAL: (6.1, 5.0, 4.8, 5.1, 5.6),
        T5: (33.9, 10.7, 11.5, 55.5, 46.3),
        T3: (24.0, 13.5, 11.0, 90.6, 81.1),
    },
}

# rows n = 250, 500, 750
_S2 = {
    "narrow": {
        NORMAL: (
            (4.1, 4.2, 5.0, 3.9, 3.9, 3.9, 4.1, 3.7, 5.3, 5.1),
            (3.9, 4.6, 5.4, 4.6, 4.6, 4.5, 4.6, 4.6, 4.7, 4.7),
            (6.1, 4.9, 5.3, 4.7, 4.7, 4.7, 4.6, 4.8, 4.8, 4.9),
        ),
        T5: (
            (17.4, 19.6, 18.0, 18.5, 18.9, 18.0, 22.0, 14.6, 20.9, 22.5),
            (22.1, 27.1, 30.9, 26.5, 26.9, 25.7, 31.5, 21.6, 30.2, 33.6),
            (33.9, 35.0, 40.3, 33.8, 34.4, 33.0, 40.3, 27.1, 40.0, 44.7),
        ),
        T3: (
            (13.4, 15.3, 17.5, 14.3, 14.7, 13.8, 19.2, 9.7, 20.8, 22.9),
            (15.9, 20.2, 31.8, 19.6, 20.1, 18.7, 26.4, 14.0, 31.0, 36.7),
            (24.0, 24.8, 43.4, 23.9, 24.3, 23.3, 32.7, 16.5, 43.3, 50.5),
        ),
    },
    "wide": {
        NORMAL: (
            (4.1, 4.4, 5.2, 4.8, 4.8, 4.8, 4.7, 4.8, 4.8, 5.1),
            (3.9, 4.7, 5.1, 4.9, 4.9, 4.8, 4.7, 4.9, 4.8, 5.0),
            (6.1, 5.0, 5.1, 4.9, 4.9, 4.9, 4.9, 4.9, 5.0, 5.0),
        ),
        T5: (
            (17.4, 8.1, 23.0, 5.9, 6.3, 5.7, 8.9, 4.9, 17.2, 24.4),
            (22.1, 9.7, 40.3, 6.3, 6.5, 6.0, 10.6, 5.4, 31.3, 41.6),
            (33.9, 10.7, 55.5, 6.4, 6.6, 6.1, 11.9, 5.8, 45.1, 57.5),
        ),
        T3: (
            (13.4, 9.1, 36.1, 7.7, 9.1, 6.8, 6.3, 10.9, 30.2, 42.7),
            (15.9, 11.3, 70.9, 12.8, 14.8, 11.1, 6.8, 21.5, 64.9, 77.4),
            (24.0, 13.5, 90.6, 17.7, 20.4, 15.4, 7.4, 31.9, 85.8, 93.1),
        ),
    },
}

_S3_TESTS = ("BIN", "LR1", "ZU3", "PE3", "LR3", "PNS", "LRB")
_S3 = {
    "narrow": {
        NORMAL: (6.1, 4.1, 4.9, 5.3, 8.2, 4.9, 5.5),
        T5: (33.9, 24.0, 35.0, 40.3, 34.3, 44.7, 37.6),
        T3: (24.0, 16.1, 24.8, 43.4, 46.5, 50.5, 49.2),
    },
    "wide": {
        NORMAL: (6.1, 4.1, 5.0, 5.1, 6.1, 5.0, 5.1),
        T5: (33.9, 24.0, 10.7, 55.5, 52.2, 57.5, 57.7),
        T3: (24.0, 16.1, 13.5, 90.6, 92.7, 93.1, 95.0),
    },
}

_COND_TESTS = ("BIN", "ZU", "ZL+", "ZL-", "ZLL", "PNS")
# rows follow CVT_NAMES
_S4 = {
    "narrow": {
        NORMAL: (
            (6.2, 4.8, 4.6, 4.9, 4.9, 5.0),
            (13.3, 14.4, 16.0, 11.5, 11.8, 10.4),
            (8.0, 9.0, 10.4, 8.4, 8.5, 8.9),
            (6.8, 6.7, 7.2, 6.4, 6.6, 6.4),
            (6.7, 6.7, 7.0, 6.4, 6.6, 6.4),
        ),
    },
    "wide": {
        NORMAL: (
            (6.2, 4.9, 5.0, 4.9, 4.9, 4.9),
            (13.3, 8.5, 9.2, 8.3, 8.3, 7.7),
            (8.0, 7.3, 8.1, 7.0, 6.9, 6.7),
            (6.8, 5.3, 5.6, 5.2, 5.3, 5.4),
            (6.7, 5.5, 5.7, 5.3, 5.5, 5.6),
        ),
    },
}

_S5 = {
    "narrow": {
        NORMAL_ARMA: (
            (12.1, 10.8, 10.0, 11.2, 9.1, 9.5),
            (30.0, 31.5, 32.0, 29.4, 29.1, 28.1),
            (28.1, 30.9, 31.8, 30.2, 29.5, 30.5),
            (30.3, 32.6, 30.7, 33.6, 32.3, 33.4),
            (19.3, 21.7, 19.9, 22.5, 22.0, 23.2),
        ),
        T5_ARMA: (
            (36.0, 36.2, 40.9, 31.4, 41.2, 45.1),
            (47.4, 54.9, 59.7, 46.1, 53.4, 53.4),
            (48.4, 52.7, 56.8, 49.5, 54.7, 56.4),
            (56.4, 60.7, 63.1, 57.2, 61.1, 62.0),
            (49.6, 54.5, 57.3, 50.5, 55.6, 56.8),
        ),
        T3_ARMA: (
            (28.1, 28.3, 35.0, 22.2, 44.1, 50.7),
            (42.2, 50.4, 56.1, 39.7, 53.3, 54.3),
            (42.5, 47.3, 53.5, 42.6, 53.3, 55.6),
            (50.1, 54.8, 58.9, 49.7, 58.8, 60.4),
            (44.1, 49.5, 54.1, 43.7, 54.2, 56.2),
        ),
    },
    "wide": {
        NORMAL_ARMA: (
            (12.1, 17.8, 15.9, 18.3, 14.6, 15.4),
            (30.0, 31.1, 30.1, 31.6, 30.4, 30.3),
            (28.1, 36.0, 34.5, 36.2, 34.6, 34.9),
            (30.3, 52.1, 46.4, 54.1, 51.2, 53.8),
            (19.3, 44.9, 36.9, 48.0, 44.7, 48.6),
        ),
        T5_ARMA: (
            (36.0, 19.5, 22.3, 19.2, 52.9, 63.9),
            (47.4, 35.4, 38.9, 31.5, 49.8, 57.9),
            (48.4, 41.0, 45.3, 37.7, 55.1, 62.6),
            (56.4, 55.2, 56.7, 52.8, 67.2, 74.1),
            (49.6, 51.1, 51.4, 49.2, 65.7, 73.5),
        ),
        T3_ARMA: (
            (28.1, 28.4, 18.5, 39.3, 87.6, 93.9),
            (42.2, 32.8, 32.6, 34.2, 71.1, 82.1),
            (42.5, 38.8, 38.7, 40.1, 75.3, 85.2),
            (50.1, 50.7, 48.4, 52.7, 82.5, 90.2),
            (44.1, 48.1, 43.4, 51.2, 83.6, 91.1),
        ),
    },
}

# ZU on the narrow window; rows are DGPs, columns CVT_NAMES
_T4 = {
    NORMAL: (4.8, 14.4, 9.0, 6.7, 6.7),
    NORMAL_ARMA: (10.8, 31.5, 30.9, 32.6, 21.7),
    T5_ARMA: (36.2, 54.9, 52.7, 60.7, 54.5),
}


def _config(test, window, cvt="None", k=4):
    c = None if cvt == "None" else make_cvt(cvt)
    return catalog.TestConfig(test, window, c, k=k, k2=0)


def _unconditional(table, tests, sizes=(750,)):
    refs, configs = {}, []
    for window, by_dgp in table.items():
        for t in tests:
            configs.append(_config(t, window))
        for dgp, vals in by_dgp.items():
            rows = vals if isinstance(vals[0], tuple) else (vals,)
            for n, row in zip(sizes, rows):
                for cfg, v in zip(configs[-len(tests):], row):
                    refs[(dgp.label, cfg.label, cfg.window_label, cfg.cvt_label, n)] = v
    return configs, refs


def _conditional(table):
    refs, configs = {}, []
    for window, by_dgp in table.items():
        block = [[_config(t, window, c) for t in _COND_TESTS] for c in CVT_NAMES]
        configs.extend(cfg for row in block for cfg in row)
        for dgp, rows in by_dgp.items():
            for cfg_row, vals in zip(block, rows):
                for cfg, v in zip(cfg_row, vals):
                    refs[(dgp.label, cfg.label, cfg.window_label, cfg.cvt_label, 750)] = v
    return configs, refs


def _table4():
    refs, configs = {}, [_config("ZU", "narrow", c) for c in CVT_NAMES]
    for dgp, vals in _T4.items():
        for cfg, v in zip(configs, vals):
            refs[(dgp.label, cfg.label, cfg.window_label, cfg.cvt_label, 750)] = v
    return configs, refs


def _grid(name):
    if name == "2":
        return (NORMAL, T5, T3), *_unconditional(_T2, _T2_TESTS), (750,)
    if name == "S1":
        return (NORMAL, T5, T3), *_unconditional(_S1, _S1_TESTS), (750,)
    if name == "S2":
        return (NORMAL, T5, T3), *_unconditional(_S2, _T2_TESTS, (250, 500, 750)), (250, 500, 750)
    if name == "S3":
        return (NORMAL, T5, T3), *_unconditional(_S3, _S3_TESTS), (750,)
    if name == "S4":
        return (NORMAL,), *_conditional(_S4), (750,)
    if name == "S5":
        return (NORMAL_ARMA, T5_ARMA, T3_ARMA), *_conditional(_S5), (750,)
    if name == "4":
        return (NORMAL, NORMAL_ARMA, T5_ARMA), *_table4(), (750,)
    raise ConfigError(f"unknown reference table {name!r}; choose from {', '.join(PRESETS)}")


PRESETS = ("2", "4", "S1", "S2", "S3", "S4", "S5")


def _normalize(name):
    key = str(name).strip().upper().replace(".", "")
    if key.startswith("TABLE"):
        key = key[5:]
    return key


def preset_spec(name, reps=10_000, seed=0, level=0.05, chunk=250):
    """SimulationSpec running the grid of reference table ``name``."""
    dgps, configs, _, sizes = _grid(_normalize(name))
    return SimulationSpec(dgps, tuple(configs), sizes, reps, seed, level, chunk)


def reference_values(name):
    """Reference rejection percentages keyed by (dgp, test, window, cvt, n)."""
    return dict(_grid(_normalize(name))[2])


REFERENCE_VALUES = {name: reference_values(name) for name in PRESETS}
