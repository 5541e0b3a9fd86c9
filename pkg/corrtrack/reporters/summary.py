"""Summary-file reporter: writes ``run_summary.json`` into the command output."""

from __future__ import annotations

import json
import logging
from datetime import datetime, timezone

from corrtrack.core.protocols import RunSummary
from corrtrack.reporters.base import BaseReporter

LOG = logging.getLogger(__name__)

SUMMARY_NAME = "run_summary.json"


class SummaryFileReporter(BaseReporter):
    """Persists the summary with the resolved configuration."""

    @property
    def name(self) -> str:
        return "summary"

    def report(self, summary: RunSummary) -> bool:
        if summary.output_dir is None:
            LOG.warning("No output directory for %s; summary not written", summary.title)
            return False

        document = {
            "title": summary.title,
            "message": summary.message,
            "artifacts": [str(path) for path in summary.artifacts],
            "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            **summary.metadata,
        }
        path = summary.output_dir / SUMMARY_NAME
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(document, indent=2, sort_keys=True, default=str))
        except OSError:
            LOG.exception("Failed to write %s", path)
            return False
        LOG.info("Run summary written to %s", path)
        return True
