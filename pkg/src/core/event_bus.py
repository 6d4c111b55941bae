import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

from src.core.exceptions import EventDeliveryError
from src.utils.logger import logger


@dataclass
class Event:
    """An execution event published during an episode."""
    event_type: str
    data: Dict[str, Any]
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat())
    source: str = "traversal"

    def to_dict(self) -> dict:
        return {
            'event_type': self.event_type,
            'data': self.data,
            'timestamp': self.timestamp,
            'source': self.source
        }


class EventBus:
    """
    Publish-subscribe hub between the traversal loop and its observers
    (trajectory writers, progress logging, tests).
    """

    def __init__(self, max_history: int = 1000):
        self._subscribers: Dict[str, List[Callable[[Event], None]]] = {}
        self._event_history: List[Event] = []
        self._max_history = max_history
        self._lock = threading.Lock()

    def subscribe(self, event_type: str, callback: Callable[[Event], None]):
        """
        Subscribe to an event type; ``'*'`` receives every event.

        Args:
            event_type: Type of event to subscribe to
            callback: Function to call when event is published
        """
        with self._lock:
            self._subscribers.setdefault(event_type, []).append(callback)
        logger.debug(f"Subscribed to event type: {event_type}")

    def unsubscribe(self, event_type: str, callback: Callable[[Event], None]):
        with self._lock:
            if callback in self._subscribers.get(event_type, []):
                self._subscribers[event_type].remove(callback)
                logger.debug(f"Unsubscribed from event type: {event_type}")

    def publish(self, event: Event):
        """
        Publish an event to its subscribers, then to wildcard subscribers.

        A failing callback is logged and does not stop delivery to the others;
        once every callback has run, the failures are raised as EventDeliveryError.
        """
        with self._lock:
            self._event_history.append(event)
            if len(self._event_history) > self._max_history:
                self._event_history = self._event_history[-self._max_history:]
            callbacks = list(self._subscribers.get(event.event_type, [])) + list(self._subscribers.get('*', []))

        errors = []
        for callback in callbacks:
            try:
                callback(event)
            except Exception as e:
                logger.error(f"Error in event callback for {event.event_type}: {e}")
                errors.append(e)
        if errors:
            raise EventDeliveryError(event.event_type, errors)

    def emit(self, event_type: str, data: Dict[str, Any], source: str = "traversal"):
        self.publish(Event(event_type=event_type, data=data, source=source))

    def get_event_history(self, event_type: Optional[str] = None, limit: int = 100) -> List[Event]:
        """
        Retrieve event history.

        Args:
            event_type: Optional filter by event type
            limit: Maximum number of events to return

        Returns:
            List of events matching the criteria
        """
        with self._lock:
            if event_type:
                events = [e for e in self._event_history if e.event_type == event_type]
            else:
                events = list(self._event_history)
        return events[-limit:]

    def clear_history(self):
        with self._lock:
            self._event_history.clear()


class EventTypes:
    """Event types published by the traversal loop."""

    EPISODE_STARTED = "episode_started"
    STEP_RECORDED = "step_recorded"
    CORRECTION_APPLIED = "correction_applied"
    OPTION_SWITCHED = "option_switched"
    GRAPH_REPLANNED = "graph_replanned"
    EPISODE_ESCALATED = "episode_escalated"
    EPISODE_FINISHED = "episode_finished"
