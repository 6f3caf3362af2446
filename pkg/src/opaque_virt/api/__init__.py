"""HTTP admin API for a running emulator."""

from .routes import AdminContext
from .server import AdminServer, create_app

__all__ = ["AdminContext", "AdminServer", "create_app"]
