"""Response selection: nearest-request matching and the hash-lookup baseline."""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel

from .alignment import DistanceUndefinedError, column_bounds, pack, score_grid, weight_profile
from .library import Interaction, InteractionLibrary, InteractionValidationError
from .models import MatchStrategy, MatcherConfig

logger = structlog.get_logger(__name__)


class MatchReport(BaseModel):
    """Evidence behind a selection.

    ``selected_index`` is None only for a hash-lookup miss. ``distance`` is
    the normalised distance for alignment strategies and 0.0 for a hash hit.
    """
    strategy: MatchStrategy
    selected_index: Optional[int] = None
    distance: Optional[float] = None
    per_candidate: Optional[List[Tuple[int, float]]] = None

    @property
    def matched(self) -> bool:
        return self.selected_index is not None


class Selection(BaseModel):
    """Response chosen for an incoming request."""
    response: bytes = b""
    no_response: bool = False
    report: MatchReport

    @property
    def silent(self) -> bool:
        """True when nothing should be sent back."""
        return self.no_response or not self.report.matched


def translate(req_in: bytes, req_sim: bytes, rsp_sim: bytes) -> bytes:
    """Produce the outgoing response; recorded responses are replayed verbatim."""
    return rsp_sim


def _chosen(req_in: bytes, interaction: Interaction, report: MatchReport) -> Selection:
    return Selection(
        response=translate(req_in, interaction.request, interaction.response),
        no_response=interaction.no_response,
        report=report,
    )


def hash_lookup(library: InteractionLibrary, req_in: bytes) -> Optional[Selection]:
    """Exact-match lookup; the first matching index wins, None when absent."""
    library.require_non_empty()
    for index, interaction in library.indexed():
        if interaction.request == req_in:
            report = MatchReport(
                strategy=MatchStrategy.HASH_LOOKUP, selected_index=index, distance=0.0
            )
            return _chosen(req_in, interaction, report)
    return None


class Matcher:
    """Selects responses from one library under one configuration.

    The library's requests are packed once so each lookup is a single
    batched alignment against every recorded request.
    """

    def __init__(self, library: InteractionLibrary, config: MatcherConfig):
        """Initialize matcher.

        Args:
            library: Non-empty interaction library
            config: Strategy, scoring constants and optional weights
        """
        library.require_non_empty()
        self.library = library
        self.config = config
        self._requests = library.requests
        self._packed = pack(self._requests)
        self._exact: Dict[bytes, int] = {}
        for index, request in enumerate(self._requests, start=1):
            self._exact.setdefault(request, index)

        weights = config.weights
        if weights is not None and weights.library_fingerprint not in (None, library.fingerprint):
            logger.warning(
                "Weights were derived from a different library",
                weights_fingerprint=weights.library_fingerprint,
                library_fingerprint=library.fingerprint,
            )

    @property
    def strategy(self) -> MatchStrategy:
        return self.config.strategy

    def select(self, req_in: bytes, include_candidates: bool = False) -> Selection:
        """Select a response for one incoming request.

        Raises:
            InteractionValidationError: If the request is empty
        """
        return self.select_many([req_in], include_candidates)[0]

    def select_many(
        self, requests: Sequence[bytes], include_candidates: bool = False
    ) -> List[Selection]:
        """Select responses for several requests with one batched alignment."""
        for req_in in requests:
            if not req_in:
                raise InteractionValidationError("incoming request must be non-empty")

        if self.strategy == MatchStrategy.HASH_LOOKUP:
            return [self._hash_select(req_in) for req_in in requests]

        table = self.distance_table(requests, floor=False)
        selections = []
        for req_in, raw in zip(requests, table):
            # A recorded copy of the request wins outright; otherwise rank on raw distance.
            exact = self._exact.get(req_in)
            position = exact - 1 if exact is not None else int(np.argmin(raw))
            row = np.maximum(raw, 0.0)
            per_candidate = None
            if include_candidates:
                per_candidate = [(index, float(d)) for index, d in enumerate(row, start=1)]
            report = MatchReport(
                strategy=self.strategy,
                selected_index=position + 1,
                distance=float(row[position]),
                per_candidate=per_candidate,
            )
            logger.debug("Request matched", index=report.selected_index, distance=report.distance)
            selections.append(_chosen(req_in, self.library[position + 1], report))
        return selections

    def distance_table(self, requests: Sequence[bytes], floor: bool = True) -> np.ndarray:
        """Normalised distances, shape ``(len(requests), len(library))``.

        See :func:`~opaque_virt.alignment.distances` for ``floor``.
        """
        params = self.config.scoring
        weights = self.config.weights
        if not len(requests):
            return np.zeros((0, len(self.library)), dtype=np.float64)

        lengths = np.fromiter((len(r) for r in requests), dtype=np.int64, count=len(requests))
        if (lengths == 0).any():
            raise DistanceUndefinedError("Distance undefined for an empty request")
        profile = weight_profile(weights, int(lengths.max()))
        upper = column_bounds(profile, params.d_identical)[lengths]
        lower = column_bounds(profile, params.d_differing)[lengths]

        scores = score_grid(requests, self._requests, params, weights, self._packed)
        raw = (upper[:, None] - scores) / (upper - lower)[:, None]
        return np.maximum(raw, 0.0) if floor else raw

    def _hash_select(self, req_in: bytes) -> Selection:
        index = self._exact.get(req_in)
        if index is None:
            logger.debug("No exact match", request_bytes=len(req_in))
            return Selection(report=MatchReport(strategy=MatchStrategy.HASH_LOOKUP))
        report = MatchReport(strategy=MatchStrategy.HASH_LOOKUP, selected_index=index, distance=0.0)
        return _chosen(req_in, self.library[index], report)


def select_response(
    library: InteractionLibrary,
    req_in: bytes,
    config: MatcherConfig,
    include_candidates: bool = False,
) -> Selection:
    """Select the response to replay for ``req_in``."""
    return Matcher(library, config).select(req_in, include_candidates)
