"""Dynamic ordered panel logit with fixed effects.

Thin Python layer over the C++ core: simulation of the built-in designs,
moment-function evaluation and verification, staged weighted GMM estimation, and
parameter recovery from exact population laws.
"""

from _dopl import (
    InvalidInput,
    NumericalError,
    Params,
    conditional_moment_expectation,
    estimate,
    identify_demo,
    moment,
    moment_count,
    moment_count_closed_form,
    paper_design_config,
    read_panel_csv,
    simulate,
    simulate_custom,
    valid_space_dimension,
    write_panel_csv,
)

__all__ = [
    "InvalidInput",
    "NumericalError",
    "Params",
    "conditional_moment_expectation",
    "estimate",
    "identify_demo",
    "moment",
    "moment_count",
    "moment_count_closed_form",
    "paper_design_config",
    "read_panel_csv",
    "simulate",
    "simulate_custom",
    "valid_space_dimension",
    "write_panel_csv",
]
