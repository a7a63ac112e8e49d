"""Embedded persistence for the service: sqlite for registry/tickets/candidates,
append-only JSONL for results and dead letters."""
from __future__ import annotations

import json
import sqlite3
import threading
import time
from pathlib import Path

_SCHEMA = """
CREATE TABLE IF NOT EXISTS models (
    model_id TEXT NOT NULL,
    version TEXT NOT NULL,
    product_id TEXT NOT NULL,
    layer_id TEXT NOT NULL,
    channel_mode TEXT NOT NULL,
    artifact TEXT NOT NULL,
    status TEXT NOT NULL,
    PRIMARY KEY (model_id, version)
);
CREATE TABLE IF NOT EXISTS jobs (
    job_id TEXT PRIMARY KEY,
    idempotency_key TEXT UNIQUE,
    image_ref TEXT NOT NULL,
    product_id TEXT NOT NULL,
    layer_id TEXT NOT NULL,
    state TEXT NOT NULL,
    assigned_node TEXT,
    result_json TEXT,
    error TEXT,
    submitted_at REAL NOT NULL,
    seq INTEGER
);
CREATE TABLE IF NOT EXISTS candidates (
    candidate_id TEXT PRIMARY KEY,
    image_id TEXT NOT NULL,
    image_path TEXT NOT NULL DEFAULT '',
    x INTEGER NOT NULL,
    y INTEGER NOT NULL,
    width INTEGER NOT NULL,
    height INTEGER NOT NULL,
    proposed_label TEXT NOT NULL,
    sources TEXT NOT NULL,
    status TEXT NOT NULL,
    decided_by TEXT NOT NULL DEFAULT '',
    decided_at REAL
);
"""


class Store:
    """Thread-safe wrapper around one sqlite connection plus two JSONL logs.

    All service state that must survive a restart lives here; in-memory stores
    (path=":memory:") back tests.
    """

    def __init__(self, db_path: str | Path = ":memory:", log_dir: str | Path | None = None):
        self._conn = sqlite3.connect(str(db_path), check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.RLock()
        with self._lock:
            self._conn.executescript(_SCHEMA)
            self._conn.commit()
        self._log_dir = Path(log_dir) if log_dir else None
        if self._log_dir:
            self._log_dir.mkdir(parents=True, exist_ok=True)
        self._mem_logs: dict[str, list[dict]] = {"results": [], "deadletters": []}

    def execute(self, sql: str, params: tuple = ()) -> sqlite3.Cursor:
        with self._lock:
            cur = self._conn.execute(sql, params)
            self._conn.commit()
            return cur

    def query(self, sql: str, params: tuple = ()) -> list[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(sql, params).fetchall()

    # -- append-only logs ---------------------------------------------------

    def append_log(self, name: str, record: dict) -> None:
        record = dict(record, logged_at=time.time())
        with self._lock:
            if self._log_dir:
                with open(self._log_dir / f"{name}.jsonl", "a") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
            else:
                self._mem_logs.setdefault(name, []).append(record)

    def read_log(self, name: str) -> list[dict]:
        with self._lock:
            if self._log_dir:
                path = self._log_dir / f"{name}.jsonl"
                if not path.exists():
                    return []
                return [json.loads(line) for line in path.read_text().splitlines() if line]
            return list(self._mem_logs.get(name, []))

    def close(self) -> None:
        with self._lock:
            self._conn.close()
