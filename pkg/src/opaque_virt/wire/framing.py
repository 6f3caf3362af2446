"""Message framing on TCP streams.

Formats:
- length_prefixed: 4-byte big-endian unsigned length, then the payload
- delimited: payload, then the delimiter bytes
- connection_per_message: the whole stream up to end-of-stream
"""

import asyncio
import struct
from collections import deque
from typing import Deque, List, Optional

from ..errors import RuntimeFailure
from ..models import FramingMode, FramingSpec

_LENGTH = struct.Struct("!I")
_READ_CHUNK = 64 * 1024


class FramingError(RuntimeFailure):
    """Raised when a stream violates its framing."""
    pass


def frame_encode(message: bytes, spec: FramingSpec) -> bytes:
    """Encode one message for the wire.

    Raises:
        FramingError: If the message is too large or contains the delimiter
    """
    if len(message) > spec.max_message_bytes:
        raise FramingError(
            f"Message of {len(message)} bytes exceeds limit {spec.max_message_bytes}"
        )
    if spec.mode == FramingMode.LENGTH_PREFIXED:
        return _LENGTH.pack(len(message)) + message
    if spec.mode == FramingMode.DELIMITED:
        if spec.delimiter in message:
            raise FramingError("Message contains the framing delimiter")
        return message + spec.delimiter
    return message


class FrameDecoder:
    """Incremental decoder: feed bytes, collect complete messages."""

    def __init__(self, spec: FramingSpec):
        self.spec = spec
        self._buffer = bytearray()

    @property
    def pending(self) -> int:
        """Bytes held that do not yet form a complete message."""
        return len(self._buffer)

    def feed(self, data: bytes) -> List[bytes]:
        """Add received bytes and return the messages they complete."""
        self._buffer.extend(data)
        if self.spec.mode == FramingMode.LENGTH_PREFIXED:
            return self._drain_length_prefixed()
        if self.spec.mode == FramingMode.DELIMITED:
            return self._drain_delimited()
        if len(self._buffer) > self.spec.max_message_bytes:
            raise FramingError(
                f"Message exceeds limit of {self.spec.max_message_bytes} bytes"
            )
        return []

    def finish(self) -> List[bytes]:
        """Signal end-of-stream.

        Raises:
            FramingError: If the stream ended inside a message
        """
        if self.spec.mode == FramingMode.CONNECTION_PER_MESSAGE:
            message = bytes(self._buffer)
            self._buffer.clear()
            return [message] if message else []
        if self._buffer:
            raise FramingError(f"Stream truncated with {len(self._buffer)} bytes of a partial message")
        return []

    def _drain_length_prefixed(self) -> List[bytes]:
        messages = []
        while len(self._buffer) >= _LENGTH.size:
            (length,) = _LENGTH.unpack_from(self._buffer)
            if length > self.spec.max_message_bytes:
                raise FramingError(
                    f"Declared length {length} exceeds limit {self.spec.max_message_bytes}"
                )
            end = _LENGTH.size + length
            if len(self._buffer) < end:
                break
            messages.append(bytes(self._buffer[_LENGTH.size:end]))
            del self._buffer[:end]
        return messages

    def _drain_delimited(self) -> List[bytes]:
        messages = []
        delimiter = self.spec.delimiter
        while True:
            position = self._buffer.find(delimiter)
            if position < 0:
                break
            if position > self.spec.max_message_bytes:
                raise FramingError(
                    f"Message exceeds limit of {self.spec.max_message_bytes} bytes"
                )
            messages.append(bytes(self._buffer[:position]))
            del self._buffer[:position + len(delimiter)]
        # The delimiter may still be arriving, so allow for its partial bytes.
        if len(self._buffer) > self.spec.max_message_bytes + len(delimiter) - 1:
            raise FramingError(
                f"Message exceeds limit of {self.spec.max_message_bytes} bytes"
            )
        return messages


def frame_split(stream: bytes, spec: FramingSpec) -> List[bytes]:
    """Split a complete byte stream into messages."""
    decoder = FrameDecoder(spec)
    return decoder.feed(stream) + decoder.finish()


class FramedReader:
    """Reads framed messages from an asyncio stream."""

    def __init__(self, reader: asyncio.StreamReader, spec: FramingSpec):
        self._reader = reader
        self._decoder = FrameDecoder(spec)
        self._ready: Deque[bytes] = deque()
        self._eof = False

    async def read_message(self) -> Optional[bytes]:
        """Next message, or None at a clean end-of-stream.

        Raises:
            FramingError: If the stream is malformed or truncated
        """
        while not self._ready:
            if self._eof:
                return None
            data = await self._reader.read(_READ_CHUNK)
            if data:
                self._ready.extend(self._decoder.feed(data))
            else:
                self._eof = True
                self._ready.extend(self._decoder.finish())
        return self._ready.popleft()


async def write_message(writer: asyncio.StreamWriter, message: bytes, spec: FramingSpec) -> None:
    """Frame and send one message.

    In connection_per_message mode the write side is closed afterwards.
    """
    writer.write(frame_encode(message, spec))
    if spec.mode == FramingMode.CONNECTION_PER_MESSAGE and writer.can_write_eof():
        writer.write_eof()
    await writer.drain()


def peer_name(writer: asyncio.StreamWriter) -> str:
    """``host:port`` of the remote end, for logs."""
    peer = writer.get_extra_info("peername")
    if isinstance(peer, tuple) and len(peer) >= 2:
        return f"{peer[0]}:{peer[1]}"
    return str(peer)


async def close_writer(writer: asyncio.StreamWriter) -> None:
    """Close a stream, ignoring a peer that already went away."""
    writer.close()
    try:
        await writer.wait_closed()
    except (ConnectionError, OSError):
        pass
