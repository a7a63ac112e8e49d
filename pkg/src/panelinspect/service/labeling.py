"""Persisted labeling-candidate store behind the screening API.

Decisions are idempotent per candidate: the status flip away from pending is a
single conditional UPDATE, so exactly one of two racing reviewers wins and the
other gets CONFLICT.
"""
from __future__ import annotations

import time
import uuid

from ..errors import ErrorCode, InspectionError
from ..reference import PatchLabelCandidate
from ..types import PatchBox
from .store import Store


class LabelingStore:
    def __init__(self, store: Store):
        self._store = store

    def add(self, candidate: PatchLabelCandidate, image_path: str = "") -> str:
        candidate_id = uuid.uuid4().hex[:12]
        self._store.execute(
            "INSERT INTO candidates "
            "(candidate_id, image_id, image_path, x, y, width, height, proposed_label, "
            " sources, status, decided_by, decided_at) VALUES (?,?,?,?,?,?,?,?,?,?,?,?)",
            (
                candidate_id,
                candidate.image_id,
                image_path,
                candidate.patch.x,
                candidate.patch.y,
                candidate.patch.width,
                candidate.patch.height,
                candidate.proposed_label,
                ",".join(sorted(candidate.sources)),
                candidate.status,
                candidate.decided_by,
                time.time() if candidate.status != "pending" else None,
            ),
        )
        return candidate_id

    def add_many(self, candidates, image_paths: dict[str, str] | None = None) -> list[str]:
        image_paths = image_paths or {}
        return [self.add(c, image_paths.get(c.image_id, "")) for c in candidates]

    def get(self, candidate_id: str) -> dict:
        rows = self._store.query(
            "SELECT * FROM candidates WHERE candidate_id=?", (candidate_id,)
        )
        if not rows:
            raise InspectionError(ErrorCode.UNKNOWN_CANDIDATE, candidate_id)
        return self._row_to_dict(rows[0])

    def list_candidates(
        self, status: str | None = None, source: str | None = None, label: str | None = None
    ) -> list[dict]:
        sql = "SELECT * FROM candidates WHERE 1=1"
        params: list = []
        if status is not None:
            sql += " AND status=?"
            params.append(status)
        if label is not None:
            sql += " AND proposed_label=?"
            params.append(label)
        sql += " ORDER BY rowid"
        rows = self._store.query(sql, tuple(params))
        out = [self._row_to_dict(r) for r in rows]
        if source is not None:
            out = [r for r in out if source in r["sources"]]
        return out

    def decide(self, candidate_id: str, decision: str, decided_by: str) -> dict:
        if decision not in ("accept", "reject"):
            raise InspectionError(ErrorCode.SCHEMA_ERROR, f"bad decision {decision!r}")
        if not decided_by:
            raise InspectionError(ErrorCode.SCHEMA_ERROR, "decided_by required")
        new_status = "accepted" if decision == "accept" else "rejected"
        cur = self._store.execute(
            "UPDATE candidates SET status=?, decided_by=?, decided_at=? "
            "WHERE candidate_id=? AND status='pending'",
            (new_status, decided_by, time.time(), candidate_id),
        )
        if cur.rowcount == 0:
            # Disambiguate: missing vs already decided.
            current = self.get(candidate_id)  # raises UNKNOWN_CANDIDATE
            raise InspectionError(
                ErrorCode.CONFLICT,
                f"candidate {candidate_id} already {current['status']}",
                decided_by=current["decided_by"],
            )
        return self.get(candidate_id)

    def accepted_candidates(self) -> list[PatchLabelCandidate]:
        """Accepted rows as candidates, ready for manifest export."""
        out = []
        for row in self.list_candidates(status="accepted"):
            out.append(
                PatchLabelCandidate(
                    image_id=row["image_id"],
                    patch=PatchBox(
                        x=row["x"], y=row["y"], width=row["width"], height=row["height"]
                    ),
                    proposed_label=row["proposed_label"],
                    sources=set(row["sources"]),
                    status="accepted",
                    decided_by=row["decided_by"],
                )
            )
        return out

    @staticmethod
    def _row_to_dict(row) -> dict:
        rec = dict(row)
        rec["sources"] = [s for s in rec["sources"].split(",") if s]
        return rec
