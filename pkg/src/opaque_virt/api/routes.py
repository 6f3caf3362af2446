"""Admin API routes."""

import base64
import time
from typing import Optional

import structlog
from fastapi import APIRouter, Depends, HTTPException, Request
from starlette.concurrency import run_in_threadpool

from .. import __version__
from ..entropy import weights_to_dict
from ..matcher import Matcher
from ..models import WeightsVector
from ..wire import EmulatorStats
from .models import (
    HealthResponse,
    LibraryResponse,
    MatchRequest,
    MatchResponse,
    StatsResponse,
    WeightsResponse,
)

logger = structlog.get_logger(__name__)

router = APIRouter()


class AdminContext:
    """What the admin API exposes about a running emulator."""

    def __init__(
        self,
        matcher: Matcher,
        stats: Optional[EmulatorStats] = None,
        weights: Optional[WeightsVector] = None,
    ):
        self.matcher = matcher
        self.stats = stats or EmulatorStats()
        self.weights = weights

    @property
    def library(self):
        return self.matcher.library


def get_context(request: Request) -> AdminContext:
    return request.app.state.context


@router.get("/health", response_model=HealthResponse)
async def health_check(context: AdminContext = Depends(get_context)):
    """Health check endpoint."""
    return HealthResponse(
        status="healthy",
        version=__version__,
        uptime=time.time() - context.stats.started_at,
    )


@router.get("/library", response_model=LibraryResponse)
async def library_summary(context: AdminContext = Depends(get_context)):
    return LibraryResponse(**context.library.describe())


@router.get("/weights", response_model=WeightsResponse)
async def loaded_weights(context: AdminContext = Depends(get_context)):
    """Weights in use; only nw_weighted emulators have any."""
    if context.weights is None:
        raise HTTPException(status_code=404, detail="Emulator is not using entropy weights")
    return WeightsResponse(**weights_to_dict(context.weights))


@router.post("/match", response_model=MatchResponse)
async def dry_run_match(body: MatchRequest, context: AdminContext = Depends(get_context)):
    """Run the emulator's matcher on a request without touching the wire."""
    selection = await run_in_threadpool(
        context.matcher.select, body.payload, body.include_candidates
    )
    report = selection.report
    logger.debug("Admin match", index=report.selected_index, distance=report.distance)
    return MatchResponse(
        strategy=report.strategy.value,
        selected_index=report.selected_index,
        distance=report.distance,
        no_response=selection.no_response,
        silent=selection.silent,
        response=base64.b64encode(selection.response).decode("ascii"),
        per_candidate=report.per_candidate,
    )


@router.get("/stats", response_model=StatsResponse)
async def emulator_stats(context: AdminContext = Depends(get_context)):
    return StatsResponse(**context.stats.snapshot())
