"""Base class for reporters.

Reporters receive one ``RunSummary`` after every command, whether it
succeeded or failed. Enable them by name in ``runtime.reporters``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

from corrtrack.core.protocols import RunSummary


class BaseReporter(ABC):
    """Abstract base class for reporters.

    Subclasses live in ``corrtrack/reporters/`` and are picked up by the
    plugin loader; ``name`` is the key used in ``runtime.reporters``.
    """

    @property
    @abstractmethod
    def name(self) -> str: ...

    @abstractmethod
    def report(self, summary: RunSummary) -> bool:
        """Deliver the summary. Returns False when delivery failed."""

    def is_available(self) -> bool:
        # Local reporters need no credentials
        return True
