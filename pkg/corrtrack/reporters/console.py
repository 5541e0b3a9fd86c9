"""Console reporter: prints the run summary to stdout."""

from __future__ import annotations

import logging
from typing import Any

from corrtrack.core.protocols import RunSummary
from corrtrack.reporters.base import BaseReporter

LOG = logging.getLogger(__name__)

RULE = "-" * 60


def _scalar_lines(values: dict[str, Any]) -> list[str]:
    """``key: value`` lines for the scalar entries of a result's metadata."""
    lines = []
    for key in sorted(values):
        value = values[key]
        if isinstance(value, float):
            lines.append(f"  {key}: {value:.4g}")
        elif isinstance(value, (int, str, bool)) or value is None:
            lines.append(f"  {key}: {value}")
    return lines


class ConsoleReporter(BaseReporter):
    """Prints the command message, its scalar results and the artifact list."""

    @property
    def name(self) -> str:
        return "console"

    def report(self, summary: RunSummary) -> bool:
        print(f"\n{summary.title}\n{RULE}")
        print(summary.message)

        error = summary.metadata.get("error")
        if error:
            print(f"\nError: {error}")

        details = _scalar_lines(summary.metadata.get("result", {}))
        if details:
            print("\nResults:")
            print("\n".join(details))

        if summary.artifacts:
            print(f"\nArtifacts ({len(summary.artifacts)}):")
            for artifact in summary.artifacts:
                print(f"  - {artifact}")

        print(RULE)
        return True
