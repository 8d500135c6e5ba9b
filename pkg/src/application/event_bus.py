"""
src/application/event_bus.py

Synchronous dispatch of run events (start, snapshots, attempt clamps,
finish) from the simulators to whatever records them: trajectory
collectors, NDJSON writers and progress logging.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Callable
from typing import Any, TypeVar

logger = logging.getLogger(__name__)

E = TypeVar("E")

Handler = Callable[[Any], None]


class EventBus:
    """Routes each published run event to the handlers of its exact class.

    Handlers run in subscription order on the publishing thread.  A lenient
    bus logs a failing handler and moves on to the next one.  A strict bus
    (``strict=True``) re-raises at once; the orchestrator runs on one, so a
    failing output writer ends the run.
    """

    def __init__(self, *, strict: bool = False) -> None:
        self._handlers: dict[type, list[Handler]] = defaultdict(list)
        self._strict = strict

    @property
    def strict(self) -> bool:
        """Whether handler errors propagate to the publisher."""
        return self._strict

    def subscribe(self, event_type: type[E], handler: Callable[[E], None]) -> Callable[[], None]:
        """Register *handler* for events of *event_type*.

        Returns:
            A callable that removes this registration again.
        """
        self._handlers[event_type].append(handler)
        return lambda: self.unsubscribe(event_type, handler)

    def unsubscribe(self, event_type: type[E], handler: Callable[[E], None]) -> None:
        """Drop one registration of *handler*; unknown handlers are ignored."""
        registered = self._handlers.get(event_type)
        if registered and handler in registered:
            registered.remove(handler)

    def handler_count(self, event_type: type) -> int:
        """Number of handlers currently registered for *event_type*."""
        return len(self._handlers.get(event_type, ()))

    def publish(self, event: object) -> int:
        """Deliver *event* and return how many handlers accepted it."""
        delivered = 0
        for handler in list(self._handlers.get(type(event), ())):
            try:
                handler(event)
            except Exception:
                if self._strict:
                    raise
                logger.exception(
                    "handler %r failed on %s (label=%s)",
                    handler,
                    type(event).__name__,
                    getattr(event, "label", "-"),
                )
            else:
                delivered += 1
        return delivered
