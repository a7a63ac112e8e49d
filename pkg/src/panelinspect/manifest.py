"""Line-delimited patch dataset manifest shared by auto-labeling and training."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .reference import PatchLabelCandidate
from .synthgen import assign_splits
from .types import PatchBox


@dataclass
class PatchRecord:
    image_path: str
    image_id: str
    x: int
    y: int
    width: int
    height: int
    label: str  # "defect" | "no_defect" or a defect class name
    status: str
    sources: list[str]
    split: str

    @property
    def box(self) -> PatchBox:
        return PatchBox(x=self.x, y=self.y, width=self.width, height=self.height)


def records_from_candidates(
    candidates: list[PatchLabelCandidate],
    image_paths: dict[str, str],
    split_seed: int = 0,
    accepted_only: bool = True,
) -> list[PatchRecord]:
    """Manifest rows for (accepted) candidates; 8/1/1 split by seeded id hash."""
    chosen = [c for c in candidates if not accepted_only or c.status == "accepted"]
    splits = assign_splits(sorted({c.image_id for c in chosen}), split_seed)
    return [
        PatchRecord(
            image_path=image_paths.get(c.image_id, ""),
            image_id=c.image_id,
            x=c.patch.x,
            y=c.patch.y,
            width=c.patch.width,
            height=c.patch.height,
            label=c.proposed_label,
            status=c.status,
            sources=sorted(c.sources),
            split=splits[c.image_id],
        )
        for c in chosen
    ]


def write_manifest(records: list[PatchRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[PatchRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            out.append(PatchRecord(**json.loads(line)))
    return out
