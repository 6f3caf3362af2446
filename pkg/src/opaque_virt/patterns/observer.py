"""Observer pattern for capture and serve events."""

from abc import ABC, abstractmethod
from enum import Enum
from typing import Any, List

import structlog

logger = structlog.get_logger(__name__)


class WireEvent(str, Enum):
    """Events published by the recorder and the emulator."""
    SESSION_OPENED = "session_opened"
    SESSION_CLOSED = "session_closed"
    INTERACTION_RECORDED = "interaction_recorded"
    REQUEST_SERVED = "request_served"
    REQUEST_SILENT = "request_silent"
    CONNECTION_ERROR = "connection_error"


class Observer(ABC):
    """Receives events from a Subject."""

    @abstractmethod
    async def update(self, subject: "Subject", event: WireEvent, data: Any) -> None:
        """Handle one event.

        Args:
            subject: Publisher of the event
            event: Event type
            data: Event payload
        """


class Subject:
    """Publishes events to attached observers."""

    def __init__(self) -> None:
        self._observers: List[Observer] = []

    @property
    def observers(self) -> List[Observer]:
        return list(self._observers)

    def attach(self, observer: Observer) -> None:
        """Attach an observer once."""
        if observer not in self._observers:
            self._observers.append(observer)

    def detach(self, observer: Observer) -> None:
        """Detach an observer if attached."""
        if observer in self._observers:
            self._observers.remove(observer)

    async def notify(self, event: WireEvent, data: Any = None) -> None:
        """Deliver an event to every observer in attachment order.

        A failing observer is logged and skipped.
        """
        for observer in list(self._observers):
            try:
                await observer.update(self, event, data)
            except Exception:
                logger.exception(
                    "Observer failed",
                    observer=type(observer).__name__,
                    event_type=event.value,
                )
