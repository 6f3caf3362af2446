"""Entropy analysis of recorded requests and derivation of alignment weights.

Pipeline: pad requests into a column matrix, measure each column's
diversity, normalise to [0, 1], then map through a scaler so that stable
(low-entropy) columns receive high weights.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import structlog
from pydantic import ValidationError

from .errors import RuntimeFailure, ValidationFailure
from .library import InteractionLibrary
from .models import EntropyMethod, ScalerKind, ScalerSpec, WeightsVector

logger = structlog.get_logger(__name__)

# Padding symbol for positions beyond a request's length.
LAMBDA = 256

# Stand-in for the threshold scaler's zero branch.
THRESHOLD_FLOOR = 1e-6

_TINY = np.finfo(np.float64).tiny


class WeightsFormatError(ValidationFailure):
    """Raised when a weights file is malformed."""
    pass


class RequestMatrix:
    """Requests padded with LAMBDA to a common width L."""

    def __init__(self, cells: np.ndarray):
        """Initialize the matrix.

        Args:
            cells: ``(rows, L)`` integer array of octets and LAMBDA
        """
        self.cells = cells

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def column(self, j: int) -> np.ndarray:
        """Cells of 1-based column ``j``."""
        if not 1 <= j <= self.width:
            raise IndexError(f"Column {j} out of range 1..{self.width}")
        return self.cells[:, j - 1]


def build_request_matrix(library: InteractionLibrary) -> RequestMatrix:
    """Pad every request of a non-empty library to the longest request length."""
    library.require_non_empty()
    requests = library.requests
    width = max(len(request) for request in requests)
    cells = np.full((len(requests), width), LAMBDA, dtype=np.int16)
    for row, request in enumerate(requests):
        cells[row, :len(request)] = np.frombuffer(request, dtype=np.uint8)
    return RequestMatrix(cells)


def column_frequencies(matrix: RequestMatrix, j: int) -> Dict[int, float]:
    """Relative frequency of each symbol (LAMBDA included) in column ``j``.

    Symbols are returned in ascending order; absent symbols are omitted.
    """
    counts = np.bincount(matrix.column(j), minlength=LAMBDA + 1)
    present = np.flatnonzero(counts)
    return {int(symbol): counts[symbol] / matrix.rows for symbol in present}


def entropy(frequencies: Dict[int, float], method: EntropyMethod) -> float:
    """Diversity of one column.

    Shannon uses the natural log; simpson is the Gini-Simpson form
    ``1 - sum(q^2)`` so that all three main measures grow with diversity.
    """
    q = np.fromiter(frequencies.values(), dtype=np.float64, count=len(frequencies))
    if method == EntropyMethod.SHANNON:
        return float(-np.sum(q * np.log(q))) + 0.0
    if method == EntropyMethod.RICHNESS:
        return float(np.count_nonzero(q))
    if method == EntropyMethod.SIMPSON:
        return float(1.0 - np.sum(q * q))
    if method == EntropyMethod.SIMPSON_RAW:
        return float(np.sum(q * q))
    raise ValueError(f"Unknown entropy method: {method}")


def column_entropies(matrix: RequestMatrix, method: EntropyMethod) -> List[float]:
    """Entropy of every column, in column order."""
    return [entropy(column_frequencies(matrix, j), method) for j in range(1, matrix.width + 1)]


def normalise(values: Sequence[float]) -> List[float]:
    """Min-max normalise to [0, 1]; a flat sequence maps to all zeros."""
    array = np.asarray(values, dtype=np.float64)
    low, high = array.min(), array.max()
    if high == low:
        return [0.0] * array.size
    return ((array - low) / (high - low)).tolist()


def scale(x: float, scaler: ScalerSpec) -> float:
    """Map a normalised entropy to a weight in (0, 1]."""
    if scaler.kind == ScalerKind.HYPERBOLIC:
        value = (1.0 + scaler.a * x) ** (-scaler.c)
    elif scaler.kind == ScalerKind.EXPONENTIAL:
        value = math.exp(-scaler.k * x)
    elif scaler.kind == ScalerKind.SIGMOID:
        z = scaler.k * (x - scaler.tau)
        if z >= 0:
            e = math.exp(-z)
            value = e / (1.0 + e)
        else:
            value = 1.0 / (1.0 + math.exp(z))
    elif scaler.kind == ScalerKind.THRESHOLD:
        value = 1.0 if x <= scaler.tau else THRESHOLD_FLOOR
    else:
        raise ValueError(f"Unknown scaler kind: {scaler.kind}")
    return min(1.0, max(value, _TINY))


def derive_weights(
    library: InteractionLibrary, method: EntropyMethod, scaler: ScalerSpec
) -> WeightsVector:
    """Derive per-column weights from a library's requests.

    Args:
        library: Non-empty interaction library
        method: Column diversity measure
        scaler: Scaling function

    Returns:
        WeightsVector of length L (longest request) with provenance
    """
    matrix = build_request_matrix(library)
    normalised = normalise(column_entropies(matrix, method))
    weights = WeightsVector(
        weights=[scale(x, scaler) for x in normalised],
        default_weight=scale(1.0, scaler),
        method=method,
        scaler=scaler,
        library_fingerprint=library.fingerprint,
    )
    logger.debug(
        "Weights derived",
        method=method.value,
        scaler=scaler.describe(),
        columns=weights.length,
    )
    return weights


def weights_table(
    library: InteractionLibrary, method: EntropyMethod, scaler: ScalerSpec
) -> List[Dict[str, Any]]:
    """Per-column breakdown: entropy, normalised entropy and weight."""
    matrix = build_request_matrix(library)
    raw = column_entropies(matrix, method)
    normalised = normalise(raw)
    return [
        {"column": j, "entropy": e, "normalised": x, "weight": scale(x, scaler)}
        for j, (e, x) in enumerate(zip(raw, normalised), start=1)
    ]


def weights_to_dict(weights: WeightsVector) -> Dict[str, Any]:
    """Weights-file JSON shape."""
    return {
        "method": weights.method.value,
        "scaler": weights.scaler.to_file_dict(),
        "default_weight": weights.default_weight,
        "weights": list(weights.weights),
        "library_fingerprint": weights.library_fingerprint,
    }


def weights_from_dict(data: Any) -> WeightsVector:
    """Validate weights-file content.

    Raises:
        WeightsFormatError: If the content is not a valid weights object
    """
    if not isinstance(data, dict):
        raise WeightsFormatError("Weights file must hold a JSON object")
    try:
        return WeightsVector.model_validate(data)
    except ValidationError as e:
        raise WeightsFormatError(f"Invalid weights file: {e}") from e


def save_weights(weights: WeightsVector, path: Union[str, Path]) -> None:
    """Write a weights file."""
    path = Path(path)
    try:
        path.write_text(json.dumps(weights_to_dict(weights), indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise RuntimeFailure(f"Failed to write weights file {path}: {e}") from e
    logger.info("Weights saved", path=str(path), columns=weights.length)


def load_weights(path: Union[str, Path]) -> WeightsVector:
    """Read a weights file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise RuntimeFailure(f"Failed to read weights file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise WeightsFormatError(f"Weights file {path} is not valid JSON: {e}") from e
    weights = weights_from_dict(data)
    logger.info("Weights loaded", path=str(path), columns=weights.length)
    return weights
