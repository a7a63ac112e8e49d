"""Rule-engine impact analysis: geometric predicates of a defect mask against
named layout regions (shorts, cuts, overlap screening)."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from PIL import Image, ImageDraw
from scipy import ndimage

from .errors import ErrorCode, InspectionError

# 4-connectivity for component analysis: diagonal contact must not count as
# an electrical bridge.
_STRUCTURE = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

PREDICATES = ("intersects", "covered_area_ge", "connects", "severs")
SEVERITIES = ("info", "minor", "major", "critical")
ROLES = ("line", "electrode", "via", "keep-out", "other")


@dataclass
class LayoutRegion:
    name: str
    mask: np.ndarray
    role: str = "other"


@dataclass
class ImpactRule:
    rule_id: str
    predicate: str
    regions: list[str]
    verdict_label: str
    severity: str = "minor"
    threshold: int = 0  # pixels, covered_area_ge only


@dataclass
class Layout:
    width: int
    height: int
    regions: dict[str, LayoutRegion]
    rules: list[ImpactRule]


@dataclass
class ImpactVerdict:
    rule_id: str
    triggered: bool
    measured: float
    verdict_label: str
    severity: str


def _rasterize_polygon(vertices, width, height) -> np.ndarray:
    canvas = Image.new("1", (width, height), 0)
    ImageDraw.Draw(canvas).polygon([tuple(v) for v in vertices], fill=1, outline=1)
    return np.asarray(canvas, dtype=bool)


def _schema_error(path: str, message: str):
    raise InspectionError(ErrorCode.SCHEMA_ERROR, message, path=path)


def load_layout(document: dict | str | Path) -> Layout:
    """Validate and rasterize a layout config (dict, YAML/JSON text, or path)."""
    if isinstance(document, (str, Path)):
        document = yaml.safe_load(Path(document).read_text())
    if not isinstance(document, dict):
        _schema_error("$", "layout document must be a mapping")
    try:
        width, height = int(document["width"]), int(document["height"])
    except (KeyError, TypeError, ValueError):
        _schema_error("$.width/height", "layout needs integer width and height")
    regions: dict[str, LayoutRegion] = {}
    for i, spec in enumerate(document.get("regions", [])):
        path = f"$.regions[{i}]"
        name = spec.get("name")
        if not name or not isinstance(name, str):
            _schema_error(path + ".name", "region needs a name")
        if name in regions:
            _schema_error(path + ".name", f"duplicate region name {name!r}")
        role = spec.get("role", "other")
        if role not in ROLES:
            _schema_error(path + ".role", f"unknown role {role!r}")
        if "polygon" in spec:
            mask = _rasterize_polygon(spec["polygon"], width, height)
        elif "mask_file" in spec:
            mask = np.asarray(Image.open(spec["mask_file"])) > 0
            if mask.shape != (height, width):
                _schema_error(path + ".mask_file", "mask dims differ from layout dims")
        elif "rect" in spec:
            x, y, w, h = (int(v) for v in spec["rect"])
            mask = np.zeros((height, width), dtype=bool)
            mask[y : y + h, x : x + w] = True
        else:
            _schema_error(path, "region needs polygon, rect or mask_file")
        if not mask.any():
            _schema_error(path, "region geometry is empty")
        regions[name] = LayoutRegion(name=name, mask=mask, role=role)
    rules: list[ImpactRule] = []
    for i, spec in enumerate(document.get("rules", [])):
        path = f"$.rules[{i}]"
        predicate = spec.get("predicate")
        if predicate not in PREDICATES:
            _schema_error(path + ".predicate", f"unknown predicate {predicate!r}")
        severity = spec.get("severity", "minor")
        if severity not in SEVERITIES:
            _schema_error(path + ".severity", f"unknown severity {severity!r}")
        names = spec.get("regions", [])
        expected = 2 if predicate == "connects" else 1
        if len(names) != expected:
            _schema_error(path + ".regions", f"{predicate} needs {expected} region(s)")
        for name in names:
            if name not in regions:
                raise InspectionError(ErrorCode.UNKNOWN_REGION, name, path=path)
        threshold = int(spec.get("threshold", 0))
        if predicate == "covered_area_ge" and threshold <= 0:
            _schema_error(path + ".threshold", "covered_area_ge needs threshold > 0")
        rules.append(
            ImpactRule(
                rule_id=spec.get("rule_id", f"rule-{i}"),
                predicate=predicate,
                regions=list(names),
                verdict_label=spec.get("verdict_label", predicate),
                severity=severity,
                threshold=threshold,
            )
        )
    return Layout(width=width, height=height, regions=regions, rules=rules)


def _component_count(mask: np.ndarray) -> int:
    _, count = ndimage.label(mask, structure=_STRUCTURE)
    return count


def evaluate_impact(mask: np.ndarray, layout: Layout) -> list[ImpactVerdict]:
    """Evaluate every rule of the layout against an image-frame defect mask."""
    if mask.shape != (layout.height, layout.width):
        raise InspectionError(
            ErrorCode.FRAME_MISMATCH, f"mask {mask.shape} vs layout {(layout.height, layout.width)}"
        )
    verdicts = []
    for rule in layout.rules:
        region = layout.regions[rule.regions[0]].mask
        if rule.predicate == "intersects":
            measured = float((mask & region).sum())
            triggered = measured > 0
        elif rule.predicate == "covered_area_ge":
            measured = float((mask & region).sum())
            triggered = measured >= rule.threshold
        elif rule.predicate == "connects":
            other = layout.regions[rule.regions[1]].mask
            labels, _ = ndimage.label(mask | region | other, structure=_STRUCTURE)
            joined = bool(
                np.intersect1d(np.unique(labels[region]), np.unique(labels[other])).max(initial=0) > 0
            )
            apart = not (region & other).any() and _component_count(region | other) >= 2
            triggered = joined and apart
            measured = float(triggered)
        else:  # severs
            triggered = _component_count(region & ~mask) > _component_count(region)
            measured = float(triggered)
        verdicts.append(
            ImpactVerdict(
                rule_id=rule.rule_id,
                triggered=triggered,
                measured=measured,
                verdict_label=rule.verdict_label,
                severity=rule.severity,
            )
        )
    return verdicts
