"""Service layer: registry, scheduler, sink retry, dispatch and labeling."""
from __future__ import annotations

import threading
import time

import pytest

from panelinspect.errors import ErrorCode, InspectionError
from panelinspect.reference import PatchLabelCandidate
from panelinspect.service import (
    Controller,
    ControllerConfig,
    DeploymentPlan,
    FileSink,
    LabelingStore,
    ModelDescriptor,
    ModelRegistry,
    PlanEntry,
    SimulatedNode,
    SinkConfig,
    Store,
    schedule_models,
)
from panelinspect.service.sink import Publisher
from panelinspect.types import PatchBox


@pytest.fixture()
def store():
    return Store()


@pytest.fixture()
def registry(store):
    reg = ModelRegistry(store)
    reg.register(ModelDescriptor("m", "1", "A", "X", "RGB", "a1"))
    return reg


class TestRegistry:
    def test_duplicate_version(self, registry):
        with pytest.raises(InspectionError) as err:
            registry.register(ModelDescriptor("m", "1", "A", "X", "RGB", "a1"))
        assert err.value.code is ErrorCode.DUPLICATE_VERSION

    def test_retire_is_status_change_not_delete(self, registry):
        registry.retire("m", "1")
        assert registry.get("m", "1").status == "retired"
        assert len(registry.list_models()) == 1
        assert registry.for_scope("A", "X") == []

    def test_unknown_model(self, registry):
        with pytest.raises(InspectionError) as err:
            registry.get("m", "99")
        assert err.value.code is ErrorCode.UNKNOWN_MODEL


class TestScheduler:
    def test_version_swap_loads_before_unloading(self, registry):
        registry.register(ModelDescriptor("m", "2", "A", "X", "RGB", "a2"))
        plan = DeploymentPlan([PlanEntry("A", "X", "m", "2", ("n1",))])
        actions = schedule_models(plan, {"n1": {("m", "1")}}, registry)
        assert [(a.kind, a.model_id, a.version) for a in actions] == [
            ("load", "m", "2"),
            ("unload", "m", "1"),
        ]

    def test_idempotent(self, registry):
        plan = DeploymentPlan([PlanEntry("A", "X", "m", "1", ("n1", "n2"))])
        actions = schedule_models(plan, {"n1": {("m", "1")}, "n2": {("m", "1")}}, registry)
        assert actions == []

    def test_new_scope_loads_everywhere(self, registry):
        plan = DeploymentPlan([PlanEntry("A", "X", "m", "1", ("n1", "n2"))])
        actions = schedule_models(plan, {"n1": set(), "n2": set()}, registry)
        assert [(a.kind, a.node_id) for a in actions] == [("load", "n1"), ("load", "n2")]

    def test_unknown_model_in_plan(self, registry):
        plan = DeploymentPlan([PlanEntry("A", "X", "ghost", "1", ("n1",))])
        with pytest.raises(InspectionError) as err:
            schedule_models(plan, {"n1": set()}, registry)
        assert err.value.code is ErrorCode.UNKNOWN_MODEL

    def test_deterministic_order(self, registry):
        registry.register(ModelDescriptor("a", "1", "B", "Y", "RGB", "x"))
        plan = DeploymentPlan(
            [PlanEntry("A", "X", "m", "1", ("n2", "n1")), PlanEntry("B", "Y", "a", "1", ("n1",))]
        )
        actions = schedule_models(plan, {"n1": set(), "n2": set()}, registry)
        assert [(a.node_id, a.model_id) for a in actions] == [("n1", "a"), ("n1", "m"), ("n2", "m")]


class _FlakySink:
    def __init__(self, fail_times: int):
        self.fail_times = fail_times
        self.calls = 0
        self.delivered = []

    def deliver(self, record):
        self.calls += 1
        if self.calls <= self.fail_times:
            raise IOError("sink down")
        self.delivered.append(record)


class TestSink:
    def test_backoff_sequence(self, store):
        sleeps = []
        sink = _FlakySink(fail_times=5)
        pub = Publisher(
            sink, store, SinkConfig(base_delay=1.0, cap_delay=4.0, max_attempts=10, sleep=sleeps.append)
        )
        report = pub.publish(dict(job_id="j1"))
        assert report.delivered and report.attempts == 6
        assert sleeps == [1.0, 2.0, 4.0, 4.0, 4.0]  # doubles, then capped

    def test_dead_letter_after_max_attempts(self, store):
        sink = _FlakySink(fail_times=99)
        pub = Publisher(sink, store, SinkConfig(base_delay=0.0, max_attempts=10, sleep=lambda _t: None))
        report = pub.publish(dict(job_id="j2", verdict="defect"))
        assert not report.delivered and report.attempts == 10
        letters = pub.dead_letters()
        assert len(letters) == 1
        assert letters[0]["record"]["job_id"] == "j2"

    def test_file_sink_one_line_per_record(self, tmp_path, store):
        sink = FileSink(tmp_path / "out.jsonl")
        pub = Publisher(sink, store, SinkConfig(sleep=lambda _t: None))
        pub.publish(dict(job_id="a", verdict="no_defect"))
        pub.publish(dict(job_id="b", verdict="defect"))
        records = sink.read()
        assert [r["job_id"] for r in records] == ["a", "b"]


def _controller(store, registry, **cfg_kwargs):
    cfg = ControllerConfig(heartbeat_timeout=0.5, pump_interval=0.01, **cfg_kwargs)
    return Controller(store, registry, publisher=None, config=cfg)


def _echo_engine(job):
    return dict(job_id=job["job_id"], image_id=job["image_id"], verdict="no_defect", defects=[],
                model=dict(model_id=job["model_id"], version=job["model_version"]), timings_ms={})


class TestDispatch:
    def test_forced_routing_single_node(self, store, registry):
        ctl = _controller(store, registry)
        node = SimulatedNode(ctl, "node-1", _echo_engine, capacity=1, heartbeat_interval=0.05)
        node.load_models({("m", "1")})
        ctl.start(), node.start()
        try:
            ticket = ctl.submit_inspection(dict(image_ref="x", product_id="A", layer_id="X"))
            deadline = time.time() + 5
            while ctl.get_ticket(ticket["job_id"])["state"] != "done" and time.time() < deadline:
                time.sleep(0.01)
            final = ctl.get_ticket(ticket["job_id"])
            assert final["state"] == "done" and final["assigned_node"] == "node-1"
        finally:
            ctl.stop(), node.crash()

    def test_least_loaded_tie_breaks_to_smallest_id(self, store, registry):
        ctl = _controller(store, registry)
        for node_id in ("node-1", "node-2"):
            ctl.register_node(node_id, capacity=5)
            ctl.set_loaded(node_id, {("m", "1")})
        ctl.nodes["node-1"].outstanding = 3
        ctl.nodes["node-2"].outstanding = 1
        assert ctl._eligible_node("A", "X").node_id == "node-2"
        ctl.nodes["node-2"].outstanding = 3
        assert ctl._eligible_node("A", "X").node_id == "node-1"

    def test_model_unavailable(self, store, registry):
        ctl = _controller(store, registry)
        ctl.register_node("node-1", capacity=1)  # nothing loaded
        with pytest.raises(InspectionError) as err:
            ctl.submit_inspection(dict(image_ref="x", product_id="A", layer_id="X"))
        assert err.value.code is ErrorCode.MODEL_UNAVAILABLE

    def test_queue_bound_rejects(self, store, registry):
        ctl = _controller(store, registry, queue_bound=2)
        ctl.register_node("node-1", capacity=1)
        ctl.set_loaded("node-1", {("m", "1")})
        ctl.nodes["node-1"].outstanding = 1  # saturated; jobs stay queued
        for i in range(2):
            ctl.submit_inspection(dict(image_ref="x", product_id="A", layer_id="X", idempotency_key=f"k{i}"))
        with pytest.raises(InspectionError) as err:
            ctl.submit_inspection(dict(image_ref="x", product_id="A", layer_id="X", idempotency_key="k9"))
        assert err.value.code is ErrorCode.NODE_SATURATED

    def test_idempotency_key_returns_same_ticket(self, store, registry):
        ctl = _controller(store, registry)
        ctl.register_node("node-1", capacity=2)
        ctl.set_loaded("node-1", {("m", "1")})
        a = ctl.submit_inspection(dict(image_ref="x", product_id="A", layer_id="X", idempotency_key="same"))
        b = ctl.submit_inspection(dict(image_ref="x", product_id="A", layer_id="X", idempotency_key="same"))
        assert a["job_id"] == b["job_id"]
        assert len(store.query("SELECT * FROM jobs")) == 1

    def test_unknown_job(self, store, registry):
        ctl = _controller(store, registry)
        with pytest.raises(InspectionError) as err:
            ctl.get_result("nope")
        assert err.value.code is ErrorCode.UNKNOWN_JOB

    def test_stale_node_requeued_and_rerouted(self, store, registry):
        ctl = _controller(store, registry)
        ctl.register_node("node-1", capacity=2)
        ctl.set_loaded("node-1", {("m", "1")})
        ticket = ctl.submit_inspection(dict(image_ref="x", product_id="A", layer_id="X"))
        assert ctl.get_ticket(ticket["job_id"])["state"] == "dispatched"
        # node-1 never heartbeats again; a live node-2 must pick the job up.
        ctl.nodes["node-1"].last_heartbeat -= 10.0
        node2 = SimulatedNode(ctl, "node-2", _echo_engine, capacity=1, heartbeat_interval=0.05)
        node2.load_models({("m", "1")})
        ctl.start(), node2.start()
        try:
            deadline = time.time() + 5
            while ctl.get_ticket(ticket["job_id"])["state"] != "done" and time.time() < deadline:
                time.sleep(0.01)
            final = ctl.get_ticket(ticket["job_id"])
            assert final["state"] == "done" and final["assigned_node"] == "node-2"
        finally:
            ctl.stop(), node2.crash()

    def test_fifo_order_per_node(self, store, registry):
        ctl = _controller(store, registry)
        done_order = []
        lock = threading.Lock()

        def engine(job):
            with lock:
                done_order.append(job["job_id"])
            return _echo_engine(job)

        node = SimulatedNode(ctl, "node-1", engine, capacity=1, heartbeat_interval=0.05)
        node.load_models({("m", "1")})
        ctl.start(), node.start()
        try:
            ids = [
                ctl.submit_inspection(
                    dict(image_ref="x", product_id="A", layer_id="X", idempotency_key=f"f{i}")
                )["job_id"]
                for i in range(8)
            ]
            deadline = time.time() + 10
            while len(done_order) < 8 and time.time() < deadline:
                time.sleep(0.01)
            assert done_order == ids
        finally:
            ctl.stop(), node.crash()

    def test_failed_job_keeps_stage_tag(self, store, registry):
        from panelinspect.service.engine import StageFailure

        ctl = _controller(store, registry)

        def engine(job):
            raise StageFailure("decode", "corrupt bytes")

        node = SimulatedNode(ctl, "node-1", engine, capacity=1, heartbeat_interval=0.05)
        node.load_models({("m", "1")})
        ctl.start(), node.start()
        try:
            ticket = ctl.submit_inspection(dict(image_ref="x", product_id="A", layer_id="X"))
            deadline = time.time() + 5
            while ctl.get_ticket(ticket["job_id"])["state"] != "failed" and time.time() < deadline:
                time.sleep(0.01)
            final = ctl.get_ticket(ticket["job_id"])
            assert final["state"] == "failed"
            assert "stage=decode" in final["error"]
        finally:
            ctl.stop(), node.crash()


class TestLabeling:
    def _cand(self, i=0):
        return PatchLabelCandidate(
            image_id=f"img-{i}", patch=PatchBox(x=0, y=0), proposed_label="defect",
            sources={"periodic"},
        )

    def test_decide_accept_then_conflict(self, store):
        labeling = LabelingStore(store)
        cid = labeling.add(self._cand())
        decided = labeling.decide(cid, "accept", "alice")
        assert decided["status"] == "accepted" and decided["decided_by"] == "alice"
        with pytest.raises(InspectionError) as err:
            labeling.decide(cid, "reject", "bob")
        assert err.value.code is ErrorCode.CONFLICT

    def test_unknown_candidate(self, store):
        with pytest.raises(InspectionError) as err:
            LabelingStore(store).decide("missing", "accept", "alice")
        assert err.value.code is ErrorCode.UNKNOWN_CANDIDATE

    def test_filters(self, store):
        labeling = LabelingStore(store)
        ids = [labeling.add(self._cand(i)) for i in range(3)]
        labeling.decide(ids[0], "accept", "alice")
        assert [c["candidate_id"] for c in labeling.list_candidates(status="pending")] == ids[1:]
        assert len(labeling.list_candidates(source="periodic")) == 3
        assert labeling.list_candidates(source="heatmap") == []

    def test_accepted_flow_into_manifest(self, store):
        from panelinspect.manifest import records_from_candidates

        labeling = LabelingStore(store)
        cid = labeling.add(self._cand())
        labeling.decide(cid, "accept", "alice")
        records = records_from_candidates(labeling.accepted_candidates(), {})
        assert len(records) == 1 and records[0].label == "defect"

    def test_concurrent_reviewers_one_wins(self, store):
        labeling = LabelingStore(store)
        cid = labeling.add(self._cand())
        outcomes = []
        barrier = threading.Barrier(2)

        def review(name):
            barrier.wait()
            try:
                labeling.decide(cid, "accept", name)
                outcomes.append(("ok", name))
            except InspectionError as err:
                outcomes.append((err.code, name))

        threads = [threading.Thread(target=review, args=(n,)) for n in ("alice", "bob")]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        kinds = [k for k, _ in outcomes]
        assert kinds.count("ok") == 1
        assert ErrorCode.CONFLICT in kinds
