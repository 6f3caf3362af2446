"""Protocol decoders and the valid/invalid response classifier."""

from __future__ import annotations

import string
from enum import Enum
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict

from ..errors import ValidationFailure
from ..models import ProtocolKind
from .synthetic import FIXED_MESSAGE_LENGTH, RESPONSE_BIT

_KEY_CHARS = frozenset(string.ascii_lowercase)
_STRUCTURAL = frozenset("{},:")
_PRINTABLE = frozenset(range(0x20, 0x7F))


class DecodeError(ValidationFailure):
    """Raised when a message does not conform to its protocol grammar."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at byte {position}")
        self.position = position


class Verdict(str, Enum):
    """Classification of an emulated response."""
    VALID = "valid"
    INVALID = "invalid"


class ParsedMessage(BaseModel):
    """Operation type and fields of a decoded message."""
    model_config = ConfigDict(frozen=True)

    op_type: str
    fields: Dict[str, str]


def _decode_directory(message: bytes) -> ParsedMessage:
    for position, octet in enumerate(message):
        if octet not in _PRINTABLE:
            raise DecodeError("non-printable byte", position)
    text = message.decode("ascii")
    if not text:
        raise DecodeError("empty message", 0)
    if text[0] != "{":
        raise DecodeError("expected '{'", 0)

    fields: Dict[str, str] = {}
    position = 1
    while True:
        start = position
        while position < len(text) and text[position] in _KEY_CHARS:
            position += 1
        if position == start:
            raise DecodeError("expected a lowercase key", position)
        key = text[start:position]
        if position >= len(text) or text[position] != ":":
            raise DecodeError("expected ':'", position)
        position += 1

        start = position
        while position < len(text) and text[position] not in _STRUCTURAL:
            position += 1
        if position == start:
            raise DecodeError(f"empty value for key '{key}'", position)
        if key in fields:
            raise DecodeError(f"duplicate key '{key}'", start)
        fields[key] = text[start:position]

        if position >= len(text):
            raise DecodeError("missing closing '}'", position)
        if text[position] == ",":
            position += 1
            continue
        if text[position] == "}":
            position += 1
            break
        raise DecodeError(f"unexpected '{text[position]}'", position)

    if position != len(text):
        raise DecodeError("bytes after closing '}'", position)
    for required in ("id", "op"):
        if required not in fields:
            raise DecodeError(f"missing key '{required}'", len(text) - 1)
    return ParsedMessage(op_type=fields["op"], fields=fields)


def _decode_fixed_width(message: bytes) -> ParsedMessage:
    if len(message) != FIXED_MESSAGE_LENGTH:
        raise DecodeError(
            f"expected {FIXED_MESSAGE_LENGTH} bytes, got {len(message)}",
            min(len(message), FIXED_MESSAGE_LENGTH),
        )
    if message[0] & ~RESPONSE_BIT == 0:
        raise DecodeError("operation code 0", 0)
    for position in range(5, FIXED_MESSAGE_LENGTH):
        if message[position] not in _PRINTABLE:
            raise DecodeError("non-printable payload byte", position)
    return ParsedMessage(
        op_type=f"0x{message[0]:02x}",
        fields={
            "direction": "response" if message[0] & RESPONSE_BIT else "request",
            "correlation_id": message[1:5].hex(),
            "payload": message[5:].decode("ascii"),
        },
    )


def decode(message: bytes, kind: ProtocolKind) -> ParsedMessage:
    """Decode a message of the given protocol kind.

    Raises:
        DecodeError: If the message does not conform, with the failing position
    """
    if not message:
        raise DecodeError("empty message", 0)
    if kind == ProtocolKind.DIRECTORY_TEXT:
        return _decode_directory(message)
    return _decode_fixed_width(message)


def try_decode(message: bytes, kind: ProtocolKind) -> Optional[ParsedMessage]:
    """Decode, returning None instead of raising."""
    try:
        return decode(message, kind)
    except DecodeError:
        return None


def classify_response(emulated: bytes, expected: bytes, kind: ProtocolKind) -> Verdict:
    """VALID iff ``emulated`` decodes and has ``expected``'s operation type.

    Payload differences do not matter. An empty emulated response is INVALID.

    Raises:
        DecodeError: If ``expected`` itself does not decode
    """
    reference = decode(expected, kind)
    parsed = try_decode(emulated, kind)
    if parsed is None or parsed.op_type != reference.op_type:
        return Verdict.INVALID
    return Verdict.VALID
