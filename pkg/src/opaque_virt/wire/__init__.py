"""Network layer: framing codecs, the recording proxy and the emulator."""

from .emulator import Emulator, EmulatorStats
from .framing import (
    FrameDecoder,
    FramedReader,
    FramingError,
    frame_encode,
    frame_split,
    write_message,
)
from .recorder import LibraryWriter, RecordingProxy, UpstreamUnavailableError

__all__ = [
    "Emulator",
    "EmulatorStats",
    "FrameDecoder",
    "FramedReader",
    "FramingError",
    "frame_encode",
    "frame_split",
    "write_message",
    "LibraryWriter",
    "RecordingProxy",
    "UpstreamUnavailableError",
]
