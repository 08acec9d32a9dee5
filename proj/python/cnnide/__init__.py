"""CNN-IDE spatio-temporal forecasting (compiled core)."""

from ._cnnide import (
    CnnideError,
    RunConfig,
    coverage_90,
    crps_ensemble,
    gaspari_cohn,
    interval_score_90,
    pipeline,
    quantile,
    read_sequence,
    simulate,
    transition_matrix,
    write_sequence,
)

__all__ = [
    "CnnideError",
    "RunConfig",
    "coverage_90",
    "crps_ensemble",
    "gaspari_cohn",
    "interval_score_90",
    "pipeline",
    "quantile",
    "read_sequence",
    "simulate",
    "transition_matrix",
    "write_sequence",
]
