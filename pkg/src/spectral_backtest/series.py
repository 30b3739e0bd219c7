"""Container for a time series of PIT values."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

VALID = "Valid"
MISSING = "Missing"
SPURIOUS = "Spurious"


@dataclass
class PitSeries:
    """PIT values in time order.

    ``pit`` holds NaN wherever a value is unavailable for use as a dependent
    observation (missing or flagged spurious).  ``flags`` and ``dates`` are
    optional metadata aligned with ``pit``.
    """

    pit: np.ndarray
    dates: np.ndarray | None = None
    flags: np.ndarray | None = None

    def __post_init__(self):
        self.pit = np.asarray(self.pit, dtype=float)
        if self.pit.ndim != 1:
            raise DomainError("PitSeries expects a one-dimensional array")
        if self.flags is None:
            self.flags = np.where(np.isnan(self.pit), MISSING, VALID)
        self.flags = np.asarray(self.flags, dtype=object)
        if self.dates is not None:
            self.dates = np.asarray(self.dates)

    def __len__(self):
        return self.pit.shape[0]

    @property
    def n_missing(self):
        return int(np.isnan(self.pit).sum())


def as_pit_array(pits):
    """Return PIT values as a float array with NaN marking missing entries."""
    if isinstance(pits, PitSeries):
        arr = pits.pit
    else:
        arr = np.asarray(pits, dtype=float)
    if arr.ndim != 1:
        raise DomainError("PIT values must be one-dimensional")
    ok = np.isnan(arr) | ((arr >= 0.0) & (arr <= 1.0))
    if not np.all(ok):
        raise DomainError("PIT values must lie in [0, 1]")
    return arr
