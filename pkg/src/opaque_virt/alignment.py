"""Plain and entropy-weighted Needleman-Wunsch alignment and the request distance.

Row 0 and column 0 of the score matrix are initialised to zero, so leading
gaps are free. In the weighted variant each move into cell ``(i, j)`` is
scaled by ``w[max(i, j)]``.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from typing_extensions import TypeAlias

from .errors import ValidationFailure
from .models import ScoringParams, WeightsVector

# Padding symbol for packed candidates; never equals an octet.
PAD = 256

# Upper bound on the number of cells held per batched row.
_MAX_BATCH_CELLS = 1 << 20

# PAD-filled uint16 message matrix and the message lengths.
PackedMessages: TypeAlias = Tuple[np.ndarray, np.ndarray]


class DistanceUndefinedError(ValidationFailure):
    """Raised when the distance normalisation has a zero denominator."""
    pass


class AlignmentResult(BaseModel):
    """Terminal score plus one optimal alignment. ``None`` marks a gap."""
    score: float
    aligned_a: List[Optional[int]]
    aligned_b: List[Optional[int]]

    def render(self, gap: str = "-") -> Tuple[str, str]:
        """Printable rendering; non-printable octets show as ``.``."""
        return _render(self.aligned_a, gap), _render(self.aligned_b, gap)


def _render(symbols: Sequence[Optional[int]], gap: str) -> str:
    out = []
    for symbol in symbols:
        if symbol is None:
            out.append(gap)
        elif 0x20 <= symbol < 0x7F:
            out.append(chr(symbol))
        else:
            out.append(".")
    return "".join(out)


def score_pair(a: int, b: int, params: ScoringParams) -> float:
    """Score two aligned octets."""
    return params.pair(a, b)


def weight_profile(weights: Optional[WeightsVector], size: int) -> np.ndarray:
    """Weights indexed by 1-based column, covering columns ``1..size``.

    Index 0 is unused. Without weights every column weighs 1.
    """
    profile = np.ones(size + 1, dtype=np.float64)
    if weights is None:
        return profile
    explicit = np.asarray(weights.weights, dtype=np.float64)
    covered = min(size, explicit.size)
    profile[1:covered + 1] = explicit[:covered]
    profile[covered + 1:] = weights.default_weight
    return profile


def pack(messages: Sequence[bytes]) -> PackedMessages:
    """Pack messages into a PAD-filled ``uint16`` matrix plus their lengths."""
    lengths = np.fromiter((len(m) for m in messages), dtype=np.int64, count=len(messages))
    width = max(int(lengths.max()) if lengths.size else 0, 1)
    matrix = np.full((len(messages), width), PAD, dtype=np.uint16)
    for row, message in enumerate(messages):
        if message:
            matrix[row, :len(message)] = np.frombuffer(message, dtype=np.uint8)
    return matrix, lengths


def _fill_rows(
    queries: np.ndarray,
    query_lengths: np.ndarray,
    candidates: np.ndarray,
    params: ScoringParams,
    profile: np.ndarray,
    keep_rows: bool = False,
):
    """Run the row recurrence for a block of queries against all candidates.

    Returns the final row of each query, shape ``(Q, N, M + 1)``, or every row
    of a single query when ``keep_rows`` is set.
    """
    n_queries = queries.shape[0]
    n_candidates, width = candidates.shape
    columns = np.arange(1, width + 1)

    prev = np.zeros((n_queries, n_candidates, width + 1), dtype=np.float64)
    final = np.zeros_like(prev)
    rows = [prev[0, 0].copy()] if keep_rows else None
    zero_column = np.zeros((n_queries, n_candidates, 1), dtype=np.float64)

    for i in range(1, queries.shape[1] + 1):
        wk = profile[np.maximum(i, columns)]
        gap = wk * params.d_gap
        running_gap = np.concatenate(([0.0], np.cumsum(gap)))

        symbol = queries[:, i - 1][:, None, None]
        substitution = np.where(candidates[None, :, :] == symbol, params.d_identical, params.d_differing)
        diagonal = prev[:, :, :-1] + wk * substitution
        up = prev[:, :, 1:] + gap
        best = np.maximum(diagonal, up)

        # Horizontal chain: row[j] = max_t (best[t] + G[j] - G[t]), t <= j, best[0] = 0.
        shifted = np.concatenate((zero_column, best - running_gap[1:]), axis=2)
        row = running_gap + np.maximum.accumulate(shifted, axis=2)

        ended = query_lengths == i
        if ended.any():
            final[ended] = row[ended]
        if keep_rows:
            rows.append(row[0, 0].copy())
        prev = row

    if keep_rows:
        return np.vstack(rows)
    return final


def score_grid(
    queries: Sequence[bytes],
    candidates: Sequence[bytes],
    params: ScoringParams,
    weights: Optional[WeightsVector] = None,
    packed: Optional[PackedMessages] = None,
) -> np.ndarray:
    """Terminal alignment scores of every query against every candidate.

    Args:
        queries: Query messages
        candidates: Candidate messages
        params: Scoring constants
        weights: Optional column weights (weighted recurrence)
        packed: Pre-packed candidates from :func:`pack`

    Returns:
        Array of shape ``(len(queries), len(candidates))``
    """
    cand_matrix, cand_lengths = packed if packed is not None else pack(candidates)
    n_candidates, width = cand_matrix.shape
    scores = np.zeros((len(queries), n_candidates), dtype=np.float64)
    if not len(queries) or not n_candidates:
        return scores

    query_matrix, query_lengths = pack(queries)
    profile = weight_profile(weights, max(query_matrix.shape[1], width))
    cells = n_candidates * (width + 1)
    block = max(1, _MAX_BATCH_CELLS // cells)

    for start in range(0, len(queries), block):
        stop = min(start + block, len(queries))
        lengths = query_lengths[start:stop]
        rows = _fill_rows(query_matrix[start:stop], lengths, cand_matrix, params, profile)
        scores[start:stop] = rows[:, np.arange(n_candidates), cand_lengths]
    return scores


def score_many(
    query: bytes,
    candidates: Sequence[bytes],
    params: ScoringParams,
    weights: Optional[WeightsVector] = None,
    packed: Optional[PackedMessages] = None,
) -> np.ndarray:
    """Terminal scores of one query against many candidates."""
    return score_grid([query], candidates, params, weights, packed)[0]


def _score_matrix(m1: bytes, m2: bytes, params: ScoringParams, profile: np.ndarray) -> np.ndarray:
    query, query_lengths = pack([m1])
    candidate, _ = pack([m2])
    matrix = _fill_rows(query[:, :len(m1)], query_lengths, candidate, params, profile, keep_rows=True)
    return matrix[:, :len(m2) + 1]


def _traceback(
    m1: bytes, m2: bytes, matrix: np.ndarray, params: ScoringParams, profile: np.ndarray
) -> Tuple[List[Optional[int]], List[Optional[int]]]:
    aligned_a: List[Optional[int]] = []
    aligned_b: List[Optional[int]] = []
    i, j = len(m1), len(m2)

    while i > 0 and j > 0:
        wk = profile[max(i, j)]
        current = matrix[i, j]
        diagonal = matrix[i - 1, j - 1] + wk * params.pair(m1[i - 1], m2[j - 1])
        up = matrix[i - 1, j] + wk * params.d_gap
        if np.isclose(diagonal, current, rtol=1e-12, atol=1e-12):
            aligned_a.append(m1[i - 1])
            aligned_b.append(m2[j - 1])
            i -= 1
            j -= 1
        elif np.isclose(up, current, rtol=1e-12, atol=1e-12):
            aligned_a.append(m1[i - 1])
            aligned_b.append(None)
            i -= 1
        else:
            aligned_a.append(None)
            aligned_b.append(m2[j - 1])
            j -= 1

    while i > 0:
        aligned_a.append(m1[i - 1])
        aligned_b.append(None)
        i -= 1
    while j > 0:
        aligned_a.append(None)
        aligned_b.append(m2[j - 1])
        j -= 1

    aligned_a.reverse()
    aligned_b.reverse()
    return aligned_a, aligned_b


def align(
    m1: bytes, m2: bytes, params: ScoringParams, weights: Optional[WeightsVector] = None
) -> AlignmentResult:
    """Global alignment of two messages with traceback (diagonal > up > left on ties)."""
    profile = weight_profile(weights, max(len(m1), len(m2), 1))
    matrix = _score_matrix(m1, m2, params, profile)
    aligned_a, aligned_b = _traceback(m1, m2, matrix, params, profile)
    return AlignmentResult(
        score=float(matrix[len(m1), len(m2)]), aligned_a=aligned_a, aligned_b=aligned_b
    )


def align_weighted(
    m1: bytes, m2: bytes, params: ScoringParams, weights: WeightsVector
) -> AlignmentResult:
    """Weighted global alignment; see :func:`align`."""
    return align(m1, m2, params, weights)


def column_score(
    result: AlignmentResult, params: ScoringParams, weights: Optional[WeightsVector] = None
) -> float:
    """Recompute an alignment's score by walking its columns.

    Gap columns taken while the opposite sequence has not started are free,
    matching the zero-initialised first row and column.
    """
    profile = weight_profile(weights, max(len(result.aligned_a), 1))
    total = 0.0
    i = j = 0
    for a, b in zip(result.aligned_a, result.aligned_b):
        if a is not None and b is not None:
            i += 1
            j += 1
            total += profile[max(i, j)] * params.pair(a, b)
        elif a is not None:
            i += 1
            if j > 0:
                total += profile[max(i, j)] * params.d_gap
        else:
            j += 1
            if i > 0:
                total += profile[max(i, j)] * params.d_gap
    return total


def column_bounds(profile: np.ndarray, value: float) -> np.ndarray:
    """Running sums ``sum(w[1..n] * value)`` for every prefix length n >= 0.

    Accumulated left to right, the same order the diagonal of the score
    matrix is filled, so a message scored against itself reproduces the
    upper bound exactly.
    """
    return np.concatenate(([0.0], np.cumsum(profile[1:] * value)))


def score_max(m1: bytes, params: ScoringParams, weights: Optional[WeightsVector] = None) -> float:
    """Best achievable score of ``m1``: every column identical."""
    profile = weight_profile(weights, len(m1))
    return float(column_bounds(profile, params.d_identical)[len(m1)])


def score_min(m1: bytes, params: ScoringParams, weights: Optional[WeightsVector] = None) -> float:
    """Score of ``m1`` against a sequence of symbols that never match."""
    profile = weight_profile(weights, len(m1))
    return float(column_bounds(profile, params.d_differing)[len(m1)])


def distances(
    query: bytes,
    candidates: Sequence[bytes],
    params: ScoringParams,
    weights: Optional[WeightsVector] = None,
    packed: Optional[PackedMessages] = None,
    floor: bool = True,
) -> np.ndarray:
    """Normalised distances from ``query`` to each candidate.

    Under weighting a longer candidate can collect column weights beyond the
    query's own columns and outscore the query's upper bound; the raw value
    is then negative. ``floor`` clips such values to 0.

    Raises:
        DistanceUndefinedError: If the query is empty
    """
    upper = score_max(query, params, weights)
    lower = score_min(query, params, weights)
    if not query or upper == lower:
        raise DistanceUndefinedError(
            f"Distance undefined for a query of length {len(query)}"
        )
    scores = score_many(query, candidates, params, weights, packed)
    raw = (upper - scores) / (upper - lower)
    return np.maximum(raw, 0.0) if floor else raw


def distance(
    m1: bytes, m2: bytes, params: ScoringParams, weights: Optional[WeightsVector] = None
) -> float:
    """Normalised distance of ``m2`` from ``m1`` (0 for identical messages)."""
    return float(distances(m1, [m2], params, weights)[0])
