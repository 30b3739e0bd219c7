"""Spectral backtests of forecast distributions from reported PIT values."""

from .catalog import TestConfig, evaluate_batch, run_test
from .conditional import CvtSpec, apply_cvt, bispectral_md_test, build_regressor_matrix, make_cvt, md_test
from .errors import (
    BacktestError,
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateSampleWarning,
    DivergentMoment,
    DomainError,
    FitFailure,
    MissingFields,
    OptimizationFailure,
    ParseError,
    SchemaError,
    SingularCovariance,
    SingularCovarianceWarning,
    SingularH,
    UnsupportedCombination,
    WindowTooLow,
)
from .ingestion import CleanReport, PitRecord, backout_z, detect_spurious, impute, load_csv
from .kernels import (
    KernelMeasure,
    beta_cross_moment,
    beta_kernel,
    builtin_kernel,
    cov_matrix,
    dirac_kernel,
    discrete_kernel,
    pns_kernel,
    product_measure,
    solve_z0,
)
from .results import TestResult
from .series import PitSeries
from .unconditional import (
    berkowitz_lr_test,
    binomial_lr_test,
    binomial_score_test,
    mono_z_test,
    multi_z_test,
    multinomial_lr_test,
    pearson_multinomial_test,
    pns_score_test,
)

__version__ = "0.1.0"
