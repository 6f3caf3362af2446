"""FastAPI application and uvicorn runner for the emulator admin API."""

import asyncio
from contextlib import asynccontextmanager
from typing import Optional

import structlog
import uvicorn
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import RuntimeFailure
from ..models import Endpoint
from .routes import AdminContext, router

logger = structlog.get_logger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan manager."""
    logger.info("Admin API started")
    yield
    logger.info("Admin API stopped")


def create_app(context: AdminContext) -> FastAPI:
    """Create the admin application bound to one emulator."""
    app = FastAPI(
        title="opaque-virt admin API",
        description="Read-only control surface of a running emulator",
        version=__version__,
        docs_url="/docs",
        redoc_url=None,
        lifespan=lifespan,
    )
    app.state.context = context
    app.include_router(router, prefix="/api/v1")

    @app.exception_handler(Exception)
    async def global_exception_handler(request, exc):
        logger.error("Unhandled exception", error=str(exc), path=request.url.path)
        return JSONResponse(
            status_code=500,
            content={"error": "Internal server error", "detail": "An unexpected error occurred"},
        )

    return app


class AdminServer:
    """Runs the admin app on the emulator's event loop."""

    def __init__(self, context: AdminContext, listen: Endpoint):
        self.listen = listen
        config = uvicorn.Config(
            create_app(context),
            host=listen.host,
            port=listen.port,
            log_level="warning",
            access_log=False,
        )
        self._server = uvicorn.Server(config)
        # The CLI owns signal handling for the whole process.
        self._server.install_signal_handlers = lambda: None
        self._task: Optional[asyncio.Task] = None

    async def start(self) -> None:
        self._task = asyncio.create_task(self._server.serve())
        while not self._server.started:
            if self._task.done():
                task, self._task = self._task, None
                # uvicorn exits the process (SystemExit) when it cannot bind.
                try:
                    task.result()
                except (SystemExit, OSError) as e:
                    raise RuntimeFailure(f"Admin API could not listen on {self.listen}") from e
                raise RuntimeFailure(f"Admin API could not listen on {self.listen}")
            await asyncio.sleep(0.01)
        logger.info("Admin API listening", listen=str(self.listen))

    async def stop(self) -> None:
        if self._task is None:
            return
        self._server.should_exit = True
        await self._task
        self._task = None
