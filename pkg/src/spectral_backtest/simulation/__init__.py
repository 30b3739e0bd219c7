"""PIT data-generating processes and the Monte Carlo size/power harness."""

from .dgp import (
    DgpSpec,
    derive_stream,
    parse_dgp,
    sample_arma_z,
    sample_batch,
    sample_losses,
    sample_pits,
    sample_pits_arma,
    sample_pits_iid,
)
from .harness import PowerRow, PowerTable, SimulationSpec, run_size_power, spec_from_dict
from .presets import PRESETS, REFERENCE_REPS, REFERENCE_VALUES, preset_spec, reference_values

__all__ = [
    "DgpSpec",
    "derive_stream",
    "parse_dgp",
    "sample_arma_z",
    "sample_batch",
    "sample_losses",
    "sample_pits",
    "sample_pits_arma",
    "sample_pits_iid",
    "PowerRow",
    "PowerTable",
    "SimulationSpec",
    "run_size_power",
    "spec_from_dict",
    "PRESETS",
    "REFERENCE_REPS",
    "REFERENCE_VALUES",
    "preset_spec",
    "reference_values",
]
