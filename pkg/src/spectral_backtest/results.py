"""Result record shared by all tests."""

import math
from dataclasses import asdict, dataclass, field


@dataclass
class TestResult:
    """Outcome of a single backtest.

    For scalar Z-tests ``statistic`` is the signed Z value and the two-sided
    p-value is the chi-square(1) tail of Z**2; all other tests report a
    chi-square statistic with ``df`` degrees of freedom.
    """

    __test__ = False  # keep pytest from collecting this class

    test_id: str
    statistic: float
    df: int
    p_value: float
    n_used: int
    kernel_id: str = ""
    window: str = ""
    cvt: str = ""
    warnings: list = field(default_factory=list)

    def reject(self, level=0.05):
        return (not math.isnan(self.p_value)) and self.p_value <= level

    def to_dict(self):
        return asdict(self)


def format_window(window):
    if window is None:
        return ""
    return f"[{window[0]:g},{window[1]:g}]"
