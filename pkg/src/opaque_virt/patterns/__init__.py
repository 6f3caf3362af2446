"""Resilience and event patterns shared by the recorder and the emulator."""

from .circuit_breaker import CircuitBreaker, CircuitBreakerState, CircuitOpenError
from .observer import Observer, Subject, WireEvent
from .retry import RetryExhaustedError, RetryHandler

__all__ = [
    "CircuitBreaker",
    "CircuitBreakerState",
    "CircuitOpenError",
    "Observer",
    "Subject",
    "WireEvent",
    "RetryExhaustedError",
    "RetryHandler",
]
