"""Result delivery to MES-style sinks: at-least-once with exponential backoff
and a dead-letter store for undeliverable results."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from ..errors import ErrorCode, InspectionError
from .store import Store


class ResultSink(Protocol):
    def deliver(self, record: dict) -> None:
        """Deliver one result record; raise on failure."""


class FileSink:
    """Append-only line-delimited file; receivers dedup by job_id."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def deliver(self, record: dict) -> None:
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def read(self) -> list[dict]:
        if not self.path.exists():
            return []
        return [json.loads(line) for line in self.path.read_text().splitlines() if line]


class HttpSink:
    """POSTs each record as JSON to a callback URL."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    def deliver(self, record: dict) -> None:
        import requests

        resp = requests.post(self.url, json=record, timeout=self.timeout)
        resp.raise_for_status()


@dataclass
class SinkConfig:
    base_delay: float = 1.0
    cap_delay: float = 60.0
    max_attempts: int = 10
    # Injectable for tests: fault-injection soaks must not actually wait a
    # minute between attempts.
    sleep: Callable[[float], None] = time.sleep


@dataclass
class DeliveryReport:
    job_id: str
    attempts: int
    delivered: bool


@dataclass
class Publisher:
    """Wraps a sink with retry, backoff, and dead-lettering."""

    sink: ResultSink
    store: Store
    config: SinkConfig = field(default_factory=SinkConfig)

    def publish(self, record: dict) -> DeliveryReport:
        job_id = record.get("job_id", "")
        delay = self.config.base_delay
        last_error = ""
        for attempt in range(1, self.config.max_attempts + 1):
            try:
                self.sink.deliver(record)
                return DeliveryReport(job_id=job_id, attempts=attempt, delivered=True)
            except Exception as exc:  # noqa: BLE001 - any sink failure retries
                last_error = repr(exc)
                if attempt < self.config.max_attempts:
                    self.config.sleep(delay)
                    delay = min(delay * 2.0, self.config.cap_delay)
        self.store.append_log(
            "deadletters", dict(record=record, error=last_error, attempts=self.config.max_attempts)
        )
        return DeliveryReport(job_id=job_id, attempts=self.config.max_attempts, delivered=False)

    def publish_or_raise(self, record: dict) -> DeliveryReport:
        report = self.publish(record)
        if not report.delivered:
            raise InspectionError(
                ErrorCode.SINK_UNREACHABLE, record.get("job_id", ""), attempts=report.attempts
            )
        return report

    def dead_letters(self) -> list[dict]:
        return self.store.read_log("deadletters")
