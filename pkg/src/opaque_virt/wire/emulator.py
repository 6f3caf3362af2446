"""Emulator service answering live requests from an interaction library."""

from __future__ import annotations

import asyncio
import time
from collections import Counter
from concurrent.futures import Executor
from typing import Any, Dict, Optional, Set

import structlog

from ..errors import RuntimeFailure
from ..library import InteractionValidationError
from ..matcher import Matcher
from ..models import Endpoint, FramingSpec
from ..patterns import Observer, Subject, WireEvent
from .framing import FramedReader, FramingError, close_writer, peer_name, write_message

logger = structlog.get_logger(__name__)


class EmulatorStats(Observer):
    """Counts emulator events for the admin API."""

    def __init__(self) -> None:
        self.started_at = time.time()
        self.connections = 0
        self.served = 0
        self.silent = 0
        self.connection_errors = 0
        self.hits: Counter = Counter()

    async def update(self, subject: Subject, event: WireEvent, data: Any) -> None:
        if event == WireEvent.SESSION_OPENED:
            self.connections += 1
        elif event == WireEvent.REQUEST_SERVED:
            self.served += 1
            self.hits[data["index"]] += 1
        elif event == WireEvent.REQUEST_SILENT:
            self.silent += 1
            if data.get("index") is not None:
                self.hits[data["index"]] += 1
        elif event == WireEvent.CONNECTION_ERROR:
            self.connection_errors += 1

    def snapshot(self) -> Dict[str, Any]:
        return {
            "connections": self.connections,
            "requests_served": self.served,
            "silent_replies": self.silent,
            "framing_errors": self.connection_errors,
            "hits": {str(index): count for index, count in sorted(self.hits.items())},
        }


class Emulator(Subject):
    """TCP service replaying recorded responses selected by a Matcher.

    Each connection is handled sequentially; connections are independent.
    No-response selections and hash-lookup misses send nothing back.
    """

    def __init__(
        self,
        listen: Endpoint,
        matcher: Matcher,
        framing: FramingSpec,
        executor: Optional[Executor] = None,
    ):
        super().__init__()
        self.listen = listen
        self.matcher = matcher
        self.framing = framing
        self.executor = executor
        self._server: Optional[asyncio.AbstractServer] = None
        self._sessions: Set[asyncio.Task] = set()
        self._stopped: Optional[asyncio.Event] = None

    async def start(self) -> int:
        """Start listening; returns the bound port."""
        self._stopped = asyncio.Event()
        try:
            self._server = await asyncio.start_server(
                self._on_client, self.listen.host, self.listen.port
            )
        except OSError as e:
            raise RuntimeFailure(f"Cannot listen on {self.listen}: {e}") from e
        port = self._server.sockets[0].getsockname()[1]
        logger.info(
            "Emulator listening",
            listen=f"{self.listen.host}:{port}",
            strategy=self.matcher.strategy.value,
            library_size=len(self.matcher.library),
        )
        return port

    async def serve_forever(self) -> None:
        """Run until stop() is called."""
        if self._stopped is None:
            await self.start()
        await self._stopped.wait()

    async def stop(self) -> None:
        server, self._server = self._server, None
        if server is not None:
            server.close()
        for task in list(self._sessions):
            task.cancel()
        if self._sessions:
            await asyncio.gather(*self._sessions, return_exceptions=True)
        if server is not None:
            await server.wait_closed()
        logger.info("Emulator stopped")
        if self._stopped is not None:
            self._stopped.set()

    async def _on_client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        self._sessions.add(task)
        try:
            await self._handle_client(reader, writer)
        finally:
            self._sessions.discard(task)

    async def _handle_client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = peer_name(writer)
        loop = asyncio.get_running_loop()
        frames = FramedReader(reader, self.framing)
        await self.notify(WireEvent.SESSION_OPENED, {"client": peer})
        try:
            while True:
                request = await frames.read_message()
                if request is None:
                    break
                try:
                    selection = await loop.run_in_executor(self.executor, self.matcher.select, request)
                except InteractionValidationError as e:
                    logger.warning("Ignoring request", client=peer, error=str(e))
                    continue

                report = selection.report
                if selection.silent:
                    logger.info(
                        "Request left unanswered",
                        client=peer,
                        index=report.selected_index,
                        no_response=selection.no_response,
                    )
                    await self.notify(
                        WireEvent.REQUEST_SILENT, {"client": peer, "index": report.selected_index}
                    )
                    continue

                await write_message(writer, selection.response, self.framing)
                logger.info(
                    "Request served",
                    client=peer,
                    index=report.selected_index,
                    distance=report.distance,
                    response_bytes=len(selection.response),
                )
                await self.notify(
                    WireEvent.REQUEST_SERVED,
                    {"client": peer, "index": report.selected_index, "distance": report.distance},
                )
        except FramingError as e:
            logger.warning("Closing connection on framing error", client=peer, error=str(e))
            await self.notify(WireEvent.CONNECTION_ERROR, {"client": peer, "error": str(e)})
        except ConnectionError as e:
            logger.warning("Connection lost", client=peer, error=str(e))
            await self.notify(WireEvent.CONNECTION_ERROR, {"client": peer, "error": str(e)})
        finally:
            await close_writer(writer)
            await self.notify(WireEvent.SESSION_CLOSED, {"client": peer})
