"""Request and response models for the emulator admin API."""

import base64
import binascii
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator


class HealthResponse(BaseModel):
    """Liveness of the admin API and the emulator behind it."""

    status: str = Field(..., description="Service status")
    version: str = Field(..., description="Package version")
    uptime: float = Field(..., description="Seconds since the emulator started")
    timestamp: datetime = Field(default_factory=datetime.utcnow, description="Current time")


class LibraryResponse(BaseModel):
    """Summary of the served interaction library."""

    count: int = Field(..., description="Number of interactions")
    no_response_count: int = Field(..., description="Interactions recorded without a response")
    min_request_length: int
    max_request_length: int
    mean_request_length: float
    fingerprint: str = Field(..., description="SHA-256 of the library file content")


class WeightsResponse(BaseModel):
    """Loaded weights file content."""

    method: str
    scaler: Dict[str, Any]
    default_weight: float
    weights: List[float]
    library_fingerprint: Optional[str] = None


class MatchRequest(BaseModel):
    """Dry-run match of one request against the library."""

    request: str = Field(..., description="Base64 encoded request octets")
    include_candidates: bool = Field(False, description="Return the per-candidate distance table")

    @field_validator("request")
    @classmethod
    def validate_request(cls, v: str) -> str:
        """Require non-empty, well-formed base64."""
        try:
            payload = base64.b64decode(v, validate=True)
        except (binascii.Error, ValueError) as e:
            raise ValueError(f"request is not valid base64: {e}")
        if not payload:
            raise ValueError("request must decode to at least one byte")
        return v

    @property
    def payload(self) -> bytes:
        return base64.b64decode(self.request)


class MatchResponse(BaseModel):
    """Selection the emulator would make for a request."""

    strategy: str
    selected_index: Optional[int] = None
    distance: Optional[float] = None
    no_response: bool = False
    silent: bool = Field(..., description="True when the emulator would send nothing back")
    response: str = Field("", description="Base64 encoded response octets")
    per_candidate: Optional[List[Tuple[int, float]]] = None


class StatsResponse(BaseModel):
    """Counters collected from emulator events."""

    connections: int
    requests_served: int
    silent_replies: int
    framing_errors: int
    hits: Dict[str, int] = Field(default_factory=dict, description="Selections per library index")


class ErrorResponse(BaseModel):
    """Error response model."""

    error: str = Field(..., description="Error message")
    detail: Optional[str] = Field(None, description="Error details")
