"""Interactions, interaction libraries and their JSONL file format."""

from __future__ import annotations

import base64
import binascii
import hashlib
import io
import json
from pathlib import Path
from typing import Any, BinaryIO, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import structlog
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .errors import RuntimeFailure, ValidationFailure

logger = structlog.get_logger(__name__)


class LibraryFormatError(ValidationFailure):
    """Raised when an interaction-library file cannot be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class InteractionValidationError(ValidationFailure):
    """Raised when an interaction or library violates its invariants."""
    pass


class SinkWriteError(RuntimeFailure):
    """Raised when library records cannot be written."""
    pass


class Interaction(BaseModel):
    """A recorded request and the response it produced."""
    model_config = ConfigDict(frozen=True)

    request: bytes
    response: bytes = b""
    no_response: bool = False

    @model_validator(mode="after")
    def validate_payloads(self) -> "Interaction":
        """Requests are non-empty; the response is empty exactly when flagged as no-response."""
        if not self.request:
            raise ValueError("request must be non-empty")
        if self.no_response and self.response:
            raise ValueError("no-response interaction must have an empty response")
        if not self.no_response and not self.response:
            raise ValueError("response must be non-empty unless no_response is set")
        return self

    @classmethod
    def build(cls, request: bytes, response: bytes = b"", no_response: bool = False) -> "Interaction":
        """Construct an interaction, raising InteractionValidationError on bad input."""
        try:
            return cls(request=request, response=response, no_response=no_response)
        except ValidationError as e:
            raise InteractionValidationError(_first_error(e)) from e

    def to_record(self) -> Dict[str, Any]:
        """File representation with base64 payloads."""
        return {
            "request": base64.b64encode(self.request).decode("ascii"),
            "response": base64.b64encode(self.response).decode("ascii"),
            "no_response": self.no_response,
        }

    def to_line(self) -> bytes:
        """One JSONL record terminated by a newline."""
        return json.dumps(self.to_record()).encode("utf-8") + b"\n"


def _first_error(error: ValidationError) -> str:
    details = error.errors()
    if not details:
        return str(error)
    return str(details[0].get("msg", error)).replace("Value error, ", "")


def _decode_payload(record: Dict[str, Any], field: str, line_number: int) -> bytes:
    value = record[field]
    if not isinstance(value, str):
        raise LibraryFormatError(f"field '{field}' must be a base64 string", line_number)
    try:
        return base64.b64decode(value.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as e:
        raise LibraryFormatError(f"field '{field}' is not valid base64: {e}", line_number) from e


def parse_record(line: bytes, line_number: int) -> Interaction:
    """Parse one JSONL line into an interaction."""
    try:
        record = json.loads(line.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise LibraryFormatError(f"invalid UTF-8: {e}", line_number) from e
    except json.JSONDecodeError as e:
        raise LibraryFormatError(f"invalid JSON: {e.msg}", line_number) from e

    if not isinstance(record, dict):
        raise LibraryFormatError("record must be a JSON object", line_number)
    if "request" not in record:
        raise LibraryFormatError("missing field 'request'", line_number)

    no_response = record.get("no_response", False)
    if not isinstance(no_response, bool):
        raise LibraryFormatError("field 'no_response' must be a boolean", line_number)

    request = _decode_payload(record, "request", line_number)
    if "response" in record:
        response = _decode_payload(record, "response", line_number)
    elif no_response:
        response = b""
    else:
        raise LibraryFormatError("missing field 'response'", line_number)

    try:
        return Interaction(request=request, response=response, no_response=no_response)
    except ValidationError as e:
        raise InteractionValidationError(f"line {line_number}: {_first_error(e)}") from e


class InteractionLibrary:
    """Ordered, immutable collection of interactions with 1-based indices."""

    def __init__(self, interactions: Iterable[Interaction] = ()):
        self._interactions: Tuple[Interaction, ...] = tuple(interactions)

    def __len__(self) -> int:
        return len(self._interactions)

    def __iter__(self) -> Iterator[Interaction]:
        return iter(self._interactions)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InteractionLibrary):
            return NotImplemented
        return self._interactions == other._interactions

    def __hash__(self) -> int:
        return hash(self._interactions)

    def __repr__(self) -> str:
        return f"InteractionLibrary(size={len(self)})"

    def __getitem__(self, index: int) -> Interaction:
        """Interaction at 1-based ``index``."""
        if not 1 <= index <= len(self._interactions):
            raise IndexError(f"Library index {index} out of range 1..{len(self._interactions)}")
        return self._interactions[index - 1]

    @property
    def interactions(self) -> Tuple[Interaction, ...]:
        return self._interactions

    @property
    def requests(self) -> List[bytes]:
        """Requests in library order."""
        return [interaction.request for interaction in self._interactions]

    def indexed(self) -> Iterator[Tuple[int, Interaction]]:
        """Yield ``(index, interaction)`` pairs with 1-based indices."""
        return enumerate(self._interactions, start=1)

    def require_non_empty(self) -> None:
        """Raise unless the library holds at least one interaction."""
        if not self._interactions:
            raise InteractionValidationError("library must be non-empty")

    def append(self, interaction: Interaction) -> "InteractionLibrary":
        """Return a new library with ``interaction`` at index ``len(self) + 1``."""
        if not isinstance(interaction, Interaction):
            raise InteractionValidationError(
                f"Expected an Interaction, got {type(interaction).__name__}"
            )
        return InteractionLibrary(self._interactions + (interaction,))

    def select(self, indices: Sequence[int]) -> "InteractionLibrary":
        """New library holding the interactions at the given 1-based indices, in that order."""
        return InteractionLibrary(self[index] for index in indices)

    def filter(self, predicate) -> "InteractionLibrary":
        """New library holding the interactions for which ``predicate`` is true."""
        return InteractionLibrary(i for i in self._interactions if predicate(i))

    def to_bytes(self) -> bytes:
        """Canonical JSONL serialization."""
        return b"".join(interaction.to_line() for interaction in self._interactions)

    @property
    def fingerprint(self) -> str:
        """SHA-256 hex digest of the canonical serialization."""
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, sink: BinaryIO) -> None:
        """Write the library to a binary stream.

        Raises:
            InteractionValidationError: If the library is empty
            SinkWriteError: If the stream rejects the write
        """
        self.require_non_empty()
        try:
            sink.write(self.to_bytes())
            sink.flush()
        except (OSError, ValueError) as e:
            raise SinkWriteError(f"Failed to write interaction library: {e}") from e

    @classmethod
    def load(cls, source: BinaryIO) -> "InteractionLibrary":
        """Read a library from a binary stream of JSONL records.

        Raises:
            LibraryFormatError: On malformed records or an empty source
            InteractionValidationError: On records violating interaction invariants
        """
        interactions: List[Interaction] = []
        for line_number, raw in enumerate(source.read().split(b"\n"), start=1):
            if not raw.strip():
                continue
            interactions.append(parse_record(raw, line_number))
        if not interactions:
            raise LibraryFormatError("library must be non-empty")
        return cls(interactions)

    @classmethod
    def from_bytes(cls, data: bytes) -> "InteractionLibrary":
        return cls.load(io.BytesIO(data))

    def describe(self) -> Dict[str, Any]:
        """Summary statistics for display and the admin API."""
        lengths = [len(request) for request in self.requests]
        return {
            "count": len(self),
            "no_response_count": sum(1 for i in self._interactions if i.no_response),
            "min_request_length": min(lengths) if lengths else 0,
            "max_request_length": max(lengths) if lengths else 0,
            "mean_request_length": (sum(lengths) / len(lengths)) if lengths else 0.0,
            "fingerprint": self.fingerprint,
        }


def load_library(path: Union[str, Path]) -> InteractionLibrary:
    """Load an interaction library from a file."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            library = InteractionLibrary.load(f)
    except OSError as e:
        raise RuntimeFailure(f"Failed to read interaction library {path}: {e}") from e
    logger.info("Interaction library loaded", path=str(path), count=len(library))
    return library


def save_library(library: InteractionLibrary, path: Union[str, Path]) -> None:
    """Write an interaction library to a file, replacing it."""
    path = Path(path)
    try:
        with open(path, "wb") as f:
            library.save(f)
    except OSError as e:
        raise SinkWriteError(f"Failed to write interaction library {path}: {e}") from e
    logger.info("Interaction library saved", path=str(path), count=len(library))
