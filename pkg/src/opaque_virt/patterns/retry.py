"""Retrying transient network operations with exponential backoff."""

from typing import Any, Awaitable, Callable, Tuple, Type, TypeVar

import structlog
from tenacity import (
    AsyncRetrying,
    RetryError,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
    wait_exponential_jitter,
)

from ..errors import RuntimeFailure
from ..models import RetryConfig

logger = structlog.get_logger(__name__)

T = TypeVar("T")


class RetryExhaustedError(RuntimeFailure):
    """Raised when every attempt of a retried operation failed."""

    def __init__(self, message: str, last_error: BaseException):
        super().__init__(message)
        self.last_error = last_error


class RetryHandler:
    """Runs coroutines under a bounded retry policy."""

    def __init__(
        self,
        config: RetryConfig,
        retry_on: Tuple[Type[BaseException], ...] = (OSError,),
    ):
        """Initialize retry handler.

        Args:
            config: Attempt count and backoff parameters
            retry_on: Exception types treated as transient
        """
        self.config = config
        self.retry_on = retry_on

    def _wait(self):
        if self.config.jitter:
            return wait_exponential_jitter(
                initial=self.config.initial_delay,
                exp_base=self.config.exponential_base,
                max=self.config.max_delay,
                jitter=self.config.initial_delay,
            )
        return wait_exponential(
            multiplier=self.config.initial_delay,
            exp_base=self.config.exponential_base,
            max=self.config.max_delay,
        )

    def _log_retry(self, retry_state) -> None:
        logger.warning(
            "Retrying after failure",
            attempt=retry_state.attempt_number,
            error=str(retry_state.outcome.exception()),
        )

    async def execute_with_retry(
        self, func: Callable[..., Awaitable[T]], *args: Any, **kwargs: Any
    ) -> T:
        """Await ``func(*args, **kwargs)``, retrying transient failures.

        Raises:
            RetryExhaustedError: If every attempt raised a transient error
        """
        retrying = AsyncRetrying(
            stop=stop_after_attempt(self.config.max_attempts),
            wait=self._wait(),
            retry=retry_if_exception_type(self.retry_on),
            before_sleep=self._log_retry,
            reraise=False,
        )
        try:
            return await retrying(func, *args, **kwargs)
        except RetryError as e:
            last_error = e.last_attempt.exception()
            raise RetryExhaustedError(
                f"All {self.config.max_attempts} attempts failed. Last error: {last_error}",
                last_error,
            ) from last_error
