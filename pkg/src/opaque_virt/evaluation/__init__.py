"""Synthetic datasets, decoders and cross-validated accuracy reports."""

from .crossval import (
    DatasetError,
    PartitionError,
    SweepParameterError,
    compare_entropy_methods,
    evaluate,
    kfold_split,
    scaler_grid,
    sweep_scaler,
    validate_dataset,
)
from .decoders import DecodeError, ParsedMessage, Verdict, classify_response, decode
from .report import format_summary, report_to_csv, report_to_json, write_report
from .synthetic import generate_synthetic

__all__ = [
    "DatasetError",
    "PartitionError",
    "SweepParameterError",
    "compare_entropy_methods",
    "evaluate",
    "kfold_split",
    "scaler_grid",
    "sweep_scaler",
    "validate_dataset",
    "DecodeError",
    "ParsedMessage",
    "Verdict",
    "classify_response",
    "decode",
    "format_summary",
    "report_to_csv",
    "report_to_json",
    "write_report",
    "generate_synthetic",
]
