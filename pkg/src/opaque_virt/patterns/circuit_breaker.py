"""Circuit breaker guarding connections to the recorded upstream service."""

import time
from enum import Enum
from typing import Callable, Optional

import structlog

from ..errors import RuntimeFailure
from ..models import CircuitBreakerConfig

logger = structlog.get_logger(__name__)


class CircuitBreakerState(str, Enum):
    """Circuit breaker states."""
    CLOSED = "closed"
    OPEN = "open"
    HALF_OPEN = "half_open"


class CircuitOpenError(RuntimeFailure):
    """Raised when a call is refused because the circuit is open."""
    pass


class CircuitBreaker:
    """Stops calling a failing upstream until a recovery timeout elapses.

    After ``failure_threshold`` consecutive failures the circuit opens.
    Once ``recovery_timeout`` has passed one trial call is let through
    (half-open); its outcome closes or re-opens the circuit.
    """

    def __init__(
        self,
        config: CircuitBreakerConfig,
        name: str = "upstream",
        clock: Callable[[], float] = time.monotonic,
    ):
        self.config = config
        self.name = name
        self._clock = clock
        self.state = CircuitBreakerState.CLOSED
        self.failure_count = 0
        self.opened_at: Optional[float] = None

    def can_execute(self) -> bool:
        """Whether a call may proceed now."""
        if self.state == CircuitBreakerState.OPEN:
            if self._clock() - self.opened_at < self.config.recovery_timeout:
                return False
            self._transition(CircuitBreakerState.HALF_OPEN)
        return True

    def check(self) -> None:
        """Raise CircuitOpenError unless a call may proceed."""
        if not self.can_execute():
            remaining = self.config.recovery_timeout - (self._clock() - self.opened_at)
            raise CircuitOpenError(
                f"Circuit '{self.name}' is open; retry in {max(remaining, 0.0):.2f}s"
            )

    def record_success(self) -> None:
        """Record a successful call."""
        self.failure_count = 0
        if self.state != CircuitBreakerState.CLOSED:
            self.opened_at = None
            self._transition(CircuitBreakerState.CLOSED)

    def record_failure(self) -> None:
        """Record a failed call."""
        self.failure_count += 1
        if self.state == CircuitBreakerState.HALF_OPEN or (
            self.state == CircuitBreakerState.CLOSED
            and self.failure_count >= self.config.failure_threshold
        ):
            self.opened_at = self._clock()
            self._transition(CircuitBreakerState.OPEN)

    def _transition(self, state: CircuitBreakerState) -> None:
        logger.info(
            "Circuit state changed",
            circuit=self.name,
            previous=self.state.value,
            state=state.value,
            failures=self.failure_count,
        )
        self.state = state
