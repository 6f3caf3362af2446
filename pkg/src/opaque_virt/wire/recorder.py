"""Recording proxy that captures client/upstream exchanges into an interaction library."""

from __future__ import annotations

import asyncio
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Set, Tuple, Union

import structlog

from ..errors import RuntimeFailure
from ..library import Interaction, SinkWriteError
from ..models import CircuitBreakerConfig, Endpoint, FramingSpec, RetryConfig
from ..patterns import (
    CircuitBreaker,
    CircuitOpenError,
    RetryExhaustedError,
    RetryHandler,
    Subject,
    WireEvent,
)
from .framing import FramedReader, FramingError, close_writer, peer_name, write_message

logger = structlog.get_logger(__name__)


class UpstreamUnavailableError(RuntimeFailure):
    """Raised when the recorded service cannot be reached."""
    pass


class LibraryWriter:
    """Single writer appending interaction records in request arrival order.

    Sessions reserve a sequence number when a request arrives and commit the
    finished interaction later. Records are written only once every earlier
    sequence number has been committed. Each record is one ``write`` call.
    """

    def __init__(self, sink: BinaryIO):
        self._sink = sink
        self._next_sequence = 0
        self._next_to_write = 0
        self._pending: Dict[int, Interaction] = {}
        self._count = 0
        self._closed = False

    @classmethod
    def open(cls, path: Union[str, Path]) -> "LibraryWriter":
        """Open ``path`` for appending."""
        try:
            return cls(open(path, "ab"))
        except OSError as e:
            raise SinkWriteError(f"Cannot open library file {path}: {e}") from e

    @property
    def recorded(self) -> int:
        return self._count

    def reserve(self) -> int:
        """Claim the next sequence number for a newly arrived request."""
        sequence = self._next_sequence
        self._next_sequence += 1
        return sequence

    def commit(self, sequence: int, interaction: Interaction) -> List[Tuple[int, Interaction]]:
        """Hand over a finished interaction.

        Returns:
            ``(library index, interaction)`` for every record written by this call

        Raises:
            SinkWriteError: If the sink rejects a record
        """
        if self._closed:
            raise SinkWriteError("Library writer is closed")
        self._pending[sequence] = interaction
        written = []
        while self._next_to_write in self._pending:
            record = self._pending.pop(self._next_to_write)
            try:
                self._sink.write(record.to_line())
                self._sink.flush()
            except (OSError, ValueError) as e:
                raise SinkWriteError(f"Failed to append interaction record: {e}") from e
            self._count += 1
            self._next_to_write += 1
            written.append((self._count, record))
        return written

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._pending:
            logger.warning("Closing writer with uncommitted records", pending=len(self._pending))
        try:
            self._sink.close()
        except OSError as e:
            raise SinkWriteError(f"Failed to close library file: {e}") from e


class RecordingProxy(Subject):
    """TCP proxy forwarding client traffic upstream and recording each exchange.

    Upstream responses are attributed to the most recent client request on
    the same connection. A response window closes at the earlier of the next
    client request and ``response_timeout_ms`` after the request; all upstream
    messages received in the window are concatenated into one response, and
    an empty window is recorded as a no-response interaction.
    """

    def __init__(
        self,
        listen: Endpoint,
        upstream: Endpoint,
        framing: FramingSpec,
        writer: LibraryWriter,
        retry: Optional[RetryConfig] = None,
        circuit_breaker: Optional[CircuitBreakerConfig] = None,
        connect_timeout: float = 5.0,
    ):
        super().__init__()
        self.listen = listen
        self.upstream = upstream
        self.framing = framing
        self.writer = writer
        self.connect_timeout = connect_timeout
        self.retry_handler = RetryHandler(
            retry or RetryConfig(), retry_on=(OSError, asyncio.TimeoutError)
        )
        self.circuit_breaker = CircuitBreaker(circuit_breaker or CircuitBreakerConfig())
        self._server: Optional[asyncio.AbstractServer] = None
        self._sessions: Set[asyncio.Task] = set()
        self._stopped: Optional[asyncio.Event] = None
        self._failure: Optional[BaseException] = None

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
        logger.info("Recording proxy listening", listen=f"{self.listen.host}:{port}", upstream=str(self.upstream))
        return port

    async def serve_forever(self) -> None:
        """Run until stop() is called.

        Raises:
            SinkWriteError: If the library file stopped accepting records
        """
        if self._stopped is None:
            await self.start()
        await self._stopped.wait()
        if self._failure is not None:
            raise self._failure

    async def stop(self) -> None:
        """Stop accepting clients, finish open sessions and close the library file."""
        server, self._server = self._server, None
        if server is not None:
            server.close()
        for task in list(self._sessions):
            task.cancel()
        if self._sessions:
            await asyncio.gather(*self._sessions, return_exceptions=True)
        if server is not None:
            await server.wait_closed()
        self.writer.close()
        logger.info("Recording proxy stopped", recorded=self.writer.recorded)
        if self._stopped is not None:
            self._stopped.set()

    async def _on_client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        self._sessions.add(task)
        try:
            await self._handle_client(reader, writer)
        finally:
            self._sessions.discard(task)

    async def _open_upstream(self) -> Tuple[asyncio.StreamReader, asyncio.StreamWriter]:
        return await asyncio.wait_for(
            asyncio.open_connection(self.upstream.host, self.upstream.port),
            timeout=self.connect_timeout,
        )

    async def connect_upstream(self) -> Tuple[asyncio.StreamReader, asyncio.StreamWriter]:
        """Open an upstream connection under the retry policy and circuit breaker.

        Raises:
            UpstreamUnavailableError: If the circuit is open or every attempt failed
        """
        try:
            self.circuit_breaker.check()
        except CircuitOpenError as e:
            raise UpstreamUnavailableError(f"Upstream {self.upstream} skipped: {e}") from e
        try:
            streams = await self.retry_handler.execute_with_retry(self._open_upstream)
        except RetryExhaustedError as e:
            self.circuit_breaker.record_failure()
            raise UpstreamUnavailableError(
                f"Upstream {self.upstream} unavailable: {e.last_error}"
            ) from e
        self.circuit_breaker.record_success()
        return streams

    async def _handle_client(
        self, client_reader: asyncio.StreamReader, client_writer: asyncio.StreamWriter
    ) -> None:
        peer = peer_name(client_writer)
        try:
            upstream_reader, upstream_writer = await self.connect_upstream()
        except UpstreamUnavailableError as e:
            logger.error("Session refused", client=peer, error=str(e))
            await self.notify(WireEvent.CONNECTION_ERROR, {"client": peer, "error": str(e)})
            await close_writer(client_writer)
            return

        logger.info("Proxy session opened", client=peer, upstream=str(self.upstream))
        await self.notify(WireEvent.SESSION_OPENED, {"client": peer})
        responses: asyncio.Queue = asyncio.Queue()
        pump = asyncio.ensure_future(
            self._pump_upstream(upstream_reader, client_writer, responses)
        )
        try:
            await self._record_session(FramedReader(client_reader, self.framing), upstream_writer, responses)
        except FramingError as e:
            logger.warning("Client framing error", client=peer, error=str(e))
            await self.notify(WireEvent.CONNECTION_ERROR, {"client": peer, "error": str(e)})
        except ConnectionError as e:
            logger.warning("Proxy connection lost", client=peer, error=str(e))
            await self.notify(WireEvent.CONNECTION_ERROR, {"client": peer, "error": str(e)})
        except SinkWriteError as e:
            logger.error("Library write failed; stopping proxy", error=str(e))
            self._failure = e
            asyncio.ensure_future(self.stop())
        finally:
            pump.cancel()
            await asyncio.gather(pump, return_exceptions=True)
            await close_writer(upstream_writer)
            await close_writer(client_writer)
            logger.info("Proxy session closed", client=peer)
            await self.notify(WireEvent.SESSION_CLOSED, {"client": peer})

    async def _pump_upstream(
        self,
        upstream_reader: asyncio.StreamReader,
        client_writer: asyncio.StreamWriter,
        responses: asyncio.Queue,
    ) -> None:
        """Forward upstream messages to the client and queue them for recording."""
        frames = FramedReader(upstream_reader, self.framing)
        try:
            while True:
                message = await frames.read_message()
                if message is None:
                    break
                responses.put_nowait(message)
                await write_message(client_writer, message, self.framing)
        except (FramingError, ConnectionError) as e:
            logger.warning("Upstream stream ended abnormally", error=str(e))
        finally:
            # None marks the end of upstream traffic.
            responses.put_nowait(None)

    async def _record_session(
        self,
        client_frames: FramedReader,
        upstream_writer: asyncio.StreamWriter,
        responses: asyncio.Queue,
    ) -> None:
        loop = asyncio.get_running_loop()
        upstream_open = True
        request = await client_frames.read_message()
        while request is not None:
            sequence = self.writer.reserve()
            collected: List[bytes] = []
            next_request: Optional[asyncio.Future] = None
            try:
                stale = _drain(responses)
                if None in stale:
                    upstream_open = False
                elif stale:
                    logger.debug("Discarding late upstream messages", count=len(stale))

                if upstream_open:
                    await write_message(upstream_writer, request, self.framing)
                    next_request = asyncio.ensure_future(client_frames.read_message())
                    upstream_open = await self._collect_window(
                        responses, next_request, collected,
                        loop.time() + self.framing.response_timeout,
                    )
            except BaseException:
                if next_request is not None:
                    next_request.cancel()
                # Interrupted windows still yield their record.
                self.writer.commit(sequence, _interaction(request, collected))
                raise
            await self._commit(sequence, request, collected)
            if next_request is None:
                break
            if not upstream_open and not next_request.done():
                next_request.cancel()
                break
            request = await next_request
        if not upstream_open:
            logger.info("Upstream closed the session")

    async def _collect_window(
        self,
        responses: asyncio.Queue,
        next_request: asyncio.Future,
        collected: List[bytes],
        deadline: float,
    ) -> bool:
        """Gather responses until the window closes; returns False once upstream has ended."""
        loop = asyncio.get_running_loop()
        client_done = False
        pending_get: Optional[asyncio.Future] = None
        try:
            while True:
                remaining = deadline - loop.time()
                if remaining <= 0:
                    return True
                if pending_get is None:
                    pending_get = asyncio.ensure_future(responses.get())
                waiting = {pending_get} if client_done else {pending_get, next_request}
                done, _ = await asyncio.wait(
                    waiting, timeout=remaining, return_when=asyncio.FIRST_COMPLETED
                )
                if pending_get in done:
                    message = pending_get.result()
                    pending_get = None
                    if message is None:
                        return False
                    collected.append(message)
                    continue
                if next_request in done:
                    if next_request.exception() is None and next_request.result() is None:
                        # Client finished sending; keep listening for upstream.
                        client_done = True
                        continue
                    return True
                if not done:
                    return True
        finally:
            if pending_get is not None:
                pending_get.cancel()

    async def _commit(self, sequence: int, request: bytes, collected: List[bytes]) -> None:
        for index, interaction in self.writer.commit(sequence, _interaction(request, collected)):
            logger.info(
                "Interaction recorded",
                index=index,
                request_bytes=len(interaction.request),
                response_bytes=len(interaction.response),
                no_response=interaction.no_response,
            )
            await self.notify(
                WireEvent.INTERACTION_RECORDED, {"index": index, "interaction": interaction}
            )


def _interaction(request: bytes, collected: List[bytes]) -> Interaction:
    if not collected or not any(collected):
        return Interaction.build(request, no_response=True)
    return Interaction.build(request, b"".join(collected))


def _drain(queue: asyncio.Queue) -> List[Optional[bytes]]:
    items = []
    while not queue.empty():
        items.append(queue.get_nowait())
    return items


