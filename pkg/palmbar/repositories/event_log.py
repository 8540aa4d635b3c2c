"""
Event log sink.

One CSV row per measured event (n, t, fired mask, L before, L after) and,
optionally, a JSON-lines dump of the full pre and post states.
"""
import json
import logging
from pathlib import Path
from types import TracebackType
from typing import Any, Mapping, Optional, TextIO, Type

from palmbar.models.state import EventRecord
from palmbar.repositories.artifacts import format_number, header_lines
from palmbar.repositories.base import BaseArtifactRepository
from palmbar.services.accumulators import Accumulator

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ["n", "t", "mask", "pre_L", "post_L"]


def _queue(L: Any) -> str:
    return " ".join(str(n) for n in L)


class EventLogWriter(Accumulator):
    """Streams events to ``<stem>.csv`` and, with ``full_state``, ``<stem>.jsonl``."""

    def __init__(
        self,
        repository: BaseArtifactRepository,
        stem: str,
        header: Mapping[str, Any],
        full_state: bool = False,
    ):
        self.repository = repository
        self.stem = stem
        self.header = dict(header)
        self.full_state = full_state
        self.rows = 0
        self._csv: Optional[TextIO] = None
        self._jsonl: Optional[TextIO] = None

    @property
    def key(self) -> str:
        return f"event-log:{self.stem}"

    @property
    def csv_path(self) -> Path:
        return self.repository.path(f"{self.stem}.csv")

    @property
    def jsonl_path(self) -> Path:
        return self.repository.path(f"{self.stem}.jsonl")

    def open(self) -> "EventLogWriter":
        self.repository.ensure()
        self._csv = open(self.csv_path, "w", encoding="utf-8", newline="\n")
        for line in header_lines(self.header):
            self._csv.write(line + "\n")
        self._csv.write(",".join(EVENT_COLUMNS) + "\n")
        if self.full_state:
            self._jsonl = open(self.jsonl_path, "w", encoding="utf-8", newline="\n")
        return self

    def close(self) -> None:
        for handle in (self._csv, self._jsonl):
            if handle is not None:
                handle.close()
        self._csv = self._jsonl = None
        logger.debug("event log %s: %d rows", self.stem, self.rows)

    def __enter__(self) -> "EventLogWriter":
        return self.open()

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc: Optional[BaseException],
        tb: Optional[TracebackType],
    ) -> None:
        self.close()

    def on_event(self, record: EventRecord, batch: int) -> None:
        if self._csv is None:
            raise RuntimeError("event log used outside its context")
        n, t, mask, pre_L, post_L = record.summary()
        self._csv.write(
            f"{n},{format_number(float(t))},{mask},{_queue(pre_L)},{_queue(post_L)}\n"
        )
        self.rows += 1
        if self._jsonl is not None:
            entry = {
                "n": record.n,
                "t": record.t,
                "fired": list(record.fired),
                "pre": record.pre.to_dict(),
                "post": record.post.to_dict(),
                "marks": [
                    {"clock": m.clock, "sample": m.sample, "destination": m.destination, "blocked": m.blocked}
                    for m in record.marks
                ],
            }
            self._jsonl.write(json.dumps(entry, sort_keys=True) + "\n")
