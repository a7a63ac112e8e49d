"""Controller: job dispatcher, node bookkeeping, and result publishing.

Dispatch decisions are serialized behind one lock (single logical writer);
nodes execute concurrently and report back through `complete`. Jobs are never
lost: a node that stops heartbeating gets its in-flight jobs requeued, and
every terminal job is handed to the at-least-once publisher (sink receivers
dedup by job_id).
"""
from __future__ import annotations

import itertools
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable

from ..errors import ErrorCode, InspectionError
from .engine import StageFailure
from .registry import ModelRegistry
from .sink import Publisher
from .store import Store


@dataclass
class ControllerConfig:
    heartbeat_timeout: float = 15.0
    queue_bound: int = 1000
    pump_interval: float = 0.02
    clock: Callable[[], float] = time.time


@dataclass
class NodeRuntime:
    node_id: str
    capacity: int
    loaded_models: set[tuple[str, str]] = field(default_factory=set)
    outstanding: int = 0
    last_heartbeat: float = 0.0
    inbox: "queue.Queue[dict]" = field(default_factory=queue.Queue)

    def info(self, now: float, timeout: float) -> dict:
        return dict(
            node_id=self.node_id,
            capacity=self.capacity,
            loaded_models=sorted(list(m) for m in self.loaded_models),
            outstanding_jobs=self.outstanding,
            last_heartbeat=self.last_heartbeat,
            available=(now - self.last_heartbeat) <= timeout,
        )


class Controller:
    def __init__(
        self,
        store: Store,
        registry: ModelRegistry,
        publisher: Publisher | None = None,
        config: ControllerConfig | None = None,
    ):
        self.store = store
        self.registry = registry
        self.publisher = publisher
        self.config = config or ControllerConfig()
        self.nodes: dict[str, NodeRuntime] = {}
        self.audit_log: list[dict] = []
        self._lock = threading.RLock()
        self._seq = itertools.count(1)
        self._publish_queue: "queue.Queue[dict | None]" = queue.Queue()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        self._stop.clear()
        pump = threading.Thread(target=self._pump_loop, name="dispatch-pump", daemon=True)
        pump.start()
        self._threads.append(pump)
        if self.publisher is not None:
            pub = threading.Thread(target=self._publish_loop, name="publisher", daemon=True)
            pub.start()
            self._threads.append(pub)

    def stop(self) -> None:
        self._stop.set()
        self._publish_queue.put(None)
        for t in self._threads:
            t.join(timeout=10)
        self._threads.clear()

    def drain_published(self, timeout: float = 60.0) -> None:
        """Block until every enqueued result has been handed to the sink."""
        deadline = time.time() + timeout
        while self._publish_queue.unfinished_tasks > 0 and time.time() < deadline:
            time.sleep(0.01)

    # -- nodes --------------------------------------------------------------

    def register_node(self, node_id: str, capacity: int) -> NodeRuntime:
        with self._lock:
            node = NodeRuntime(node_id=node_id, capacity=capacity)
            node.last_heartbeat = self.config.clock()
            self.nodes[node_id] = node
            return node

    def heartbeat(self, node_id: str, loaded_models: set[tuple[str, str]] | None = None) -> None:
        with self._lock:
            node = self.nodes.get(node_id)
            if node is None:
                raise InspectionError(ErrorCode.UNKNOWN_NODE, node_id)
            node.last_heartbeat = self.config.clock()
            if loaded_models is not None:
                node.loaded_models = set(loaded_models)

    def set_loaded(self, node_id: str, loaded_models: set[tuple[str, str]]) -> None:
        with self._lock:
            self.nodes[node_id].loaded_models = set(loaded_models)

    def list_nodes(self) -> list[dict]:
        now = self.config.clock()
        with self._lock:
            return [
                self.nodes[nid].info(now, self.config.heartbeat_timeout)
                for nid in sorted(self.nodes)
            ]

    def current_deployment(self) -> dict[str, set[tuple[str, str]]]:
        with self._lock:
            return {nid: set(node.loaded_models) for nid, node in self.nodes.items()}

    # -- job lifecycle ------------------------------------------------------

    def submit_inspection(self, request: dict) -> dict:
        """Queue a job; returns the ticket. Duplicate idempotency_key returns
        the existing ticket unchanged."""
        key = request.get("idempotency_key") or uuid.uuid4().hex
        with self._lock:
            existing = self.store.query("SELECT * FROM jobs WHERE idempotency_key=?", (key,))
            if existing:
                return self._ticket(dict(existing[0]))
            product_id = request.get("product_id", "")
            layer_id = request.get("layer_id", "")
            scope_models = {
                m.key for m in self.registry.for_scope(product_id, layer_id)
            }
            if not scope_models or not any(
                scope_models & node.loaded_models for node in self.nodes.values()
            ):
                raise InspectionError(
                    ErrorCode.MODEL_UNAVAILABLE,
                    f"no node serves scope ({product_id}, {layer_id})",
                )
            queued = self.store.query(
                "SELECT COUNT(*) AS n FROM jobs WHERE state='queued'"
            )[0]["n"]
            if queued >= self.config.queue_bound:
                raise InspectionError(ErrorCode.NODE_SATURATED, f"queue bound {queued} reached")
            job_id = uuid.uuid4().hex[:16]
            self.store.execute(
                "INSERT INTO jobs (job_id, idempotency_key, image_ref, product_id, layer_id, "
                "state, submitted_at, seq) VALUES (?,?,?,?,?,?,?,?)",
                (
                    job_id,
                    key,
                    request.get("image_ref", request.get("image", "")),
                    product_id,
                    layer_id,
                    "queued",
                    self.config.clock(),
                    next(self._seq),
                ),
            )
            self._dispatch_pass()
            return self.get_ticket(job_id)

    def get_ticket(self, job_id: str) -> dict:
        rows = self.store.query("SELECT * FROM jobs WHERE job_id=?", (job_id,))
        if not rows:
            raise InspectionError(ErrorCode.UNKNOWN_JOB, job_id)
        return self._ticket(dict(rows[0]))

    def get_result(self, job_id: str) -> dict:
        ticket = self.get_ticket(job_id)
        return ticket

    def complete(self, node_id: str, job_id: str, result: dict | None, error: str | None) -> None:
        """Node callback after executing a job; forward-only state transition."""
        import json

        with self._lock:
            node = self.nodes.get(node_id)
            if node is not None and node.outstanding > 0:
                node.outstanding -= 1
            rows = self.store.query("SELECT state FROM jobs WHERE job_id=?", (job_id,))
            if not rows or rows[0]["state"] in ("done", "failed"):
                return  # duplicate completion after a requeue; first one won
            if error is None:
                self.store.execute(
                    "UPDATE jobs SET state='done', result_json=? WHERE job_id=?",
                    (json.dumps(result, sort_keys=True), job_id),
                )
            else:
                self.store.execute(
                    "UPDATE jobs SET state='failed', error=? WHERE job_id=?", (error, job_id)
                )
            record = result if error is None else dict(job_id=job_id, verdict="failed", error=error)
            if self.publisher is not None:
                self._publish_queue.put(dict(record))
            self._dispatch_pass()

    def outcome_counts(self) -> dict[str, int]:
        rows = self.store.query("SELECT state, COUNT(*) AS n FROM jobs GROUP BY state")
        return {row["state"]: row["n"] for row in rows}

    # -- dispatch internals -------------------------------------------------

    def _eligible_node(self, product_id: str, layer_id: str) -> NodeRuntime | None:
        now = self.config.clock()
        scope_models = {m.key for m in self.registry.for_scope(product_id, layer_id)}
        best = None
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if (now - node.last_heartbeat) > self.config.heartbeat_timeout:
                continue
            if not (scope_models & node.loaded_models):
                continue
            if node.outstanding >= node.capacity:
                continue
            if best is None or node.outstanding < best.outstanding:
                best = node
        return best

    def _dispatch_pass(self) -> None:
        with self._lock:
            rows = self.store.query("SELECT * FROM jobs WHERE state='queued' ORDER BY seq")
            for row in rows:
                job = dict(row)
                node = self._eligible_node(job["product_id"], job["layer_id"])
                if node is None:
                    continue
                model = sorted(
                    {m.key for m in self.registry.for_scope(job["product_id"], job["layer_id"])}
                    & node.loaded_models
                )[0]
                self.store.execute(
                    "UPDATE jobs SET state='dispatched', assigned_node=? WHERE job_id=?",
                    (node.node_id, job["job_id"]),
                )
                node.outstanding += 1
                self.audit_log.append(
                    dict(
                        job_id=job["job_id"],
                        node_id=node.node_id,
                        loaded_at_dispatch=sorted(node.loaded_models),
                        model=model,
                        at=self.config.clock(),
                    )
                )
                node.inbox.put(
                    dict(
                        job_id=job["job_id"],
                        image_ref=job["image_ref"],
                        image_id=job["job_id"],
                        product_id=job["product_id"],
                        layer_id=job["layer_id"],
                        model_id=model[0],
                        model_version=model[1],
                    )
                )

    def _requeue_stale(self) -> None:
        now = self.config.clock()
        with self._lock:
            for node in self.nodes.values():
                if (now - node.last_heartbeat) <= self.config.heartbeat_timeout:
                    continue
                rows = self.store.query(
                    "SELECT job_id FROM jobs WHERE state='dispatched' AND assigned_node=?",
                    (node.node_id,),
                )
                if not rows:
                    continue
                for row in rows:
                    self.store.execute(
                        "UPDATE jobs SET state='queued', assigned_node=NULL WHERE job_id=?",
                        (row["job_id"],),
                    )
                node.outstanding = 0
                # Anything still sitting in the crashed node's inbox is stale;
                # the job rows above are authoritative.
                while not node.inbox.empty():
                    try:
                        node.inbox.get_nowait()
                    except queue.Empty:
                        break

    def _pump_loop(self) -> None:
        while not self._stop.is_set():
            try:
                self._requeue_stale()
                self._dispatch_pass()
            except Exception:  # noqa: BLE001 - pump must survive anything
                pass
            self._stop.wait(self.config.pump_interval)

    def _publish_loop(self) -> None:
        while True:
            record = self._publish_queue.get()
            try:
                if record is None:
                    return
                report = self.publisher.publish(record)
                self.store.append_log(
                    "results",
                    dict(
                        job_id=report.job_id,
                        delivered=report.delivered,
                        attempts=report.attempts,
                    ),
                )
            finally:
                self._publish_queue.task_done()

    @staticmethod
    def _ticket(row: dict) -> dict:
        import json

        return dict(
            job_id=row["job_id"],
            state=row["state"],
            assigned_node=row["assigned_node"],
            image_ref=row["image_ref"],
            product_id=row["product_id"],
            layer_id=row["layer_id"],
            result=json.loads(row["result_json"]) if row.get("result_json") else None,
            error=row.get("error"),
        )


class SimulatedNode:
    """Worker-pool stand-in for a computing node: threads pulling from the
    controller-fed inbox, plus a heartbeat thread. `crash()` silences both."""

    def __init__(
        self,
        controller: Controller,
        node_id: str,
        engine: Callable[[dict], dict],
        capacity: int = 2,
        heartbeat_interval: float = 0.5,
    ):
        self.controller = controller
        self.node_id = node_id
        self.engine = engine
        self.capacity = capacity
        self.heartbeat_interval = heartbeat_interval
        self.runtime = controller.register_node(node_id, capacity)
        self._crashed = threading.Event()
        self._threads: list[threading.Thread] = []

    def load_models(self, models: set[tuple[str, str]]) -> None:
        self.controller.set_loaded(self.node_id, models)

    def start(self) -> None:
        self._crashed.clear()
        workers = [
            threading.Thread(target=self._work_loop, name=f"{self.node_id}-w{i}", daemon=True)
            for i in range(self.capacity)
        ]
        hb = threading.Thread(target=self._heartbeat_loop, name=f"{self.node_id}-hb", daemon=True)
        for t in [*workers, hb]:
            t.start()
        self._threads = [*workers, hb]

    def crash(self) -> None:
        """Stop heartbeating and executing; in-flight jobs are abandoned."""
        self._crashed.set()

    def restart(self) -> None:
        self.crash()
        for t in self._threads:
            t.join(timeout=5)
        self.start()
        self.controller.heartbeat(self.node_id)

    def _work_loop(self) -> None:
        while not self._crashed.is_set():
            try:
                job = self.runtime.inbox.get(timeout=0.05)
            except queue.Empty:
                continue
            if self._crashed.is_set():
                return  # simulates dying mid-flight; controller will requeue
            try:
                result = self.engine(job)
                self.controller.complete(self.node_id, job["job_id"], result, None)
            except StageFailure as err:
                self.controller.complete(
                    self.node_id, job["job_id"], None, f"stage={err.stage}: {err}"
                )
            except Exception as exc:  # noqa: BLE001
                self.controller.complete(
                    self.node_id, job["job_id"], None, f"stage=unknown: {exc!r}"
                )

    def _heartbeat_loop(self) -> None:
        while not self._crashed.is_set():
            try:
                self.controller.heartbeat(self.node_id)
            except InspectionError:
                return
            self._crashed.wait(self.heartbeat_interval)
