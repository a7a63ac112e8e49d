"""Impact rule engine: layout validation and the short/cut/clean scenes."""
from __future__ import annotations

import numpy as np
import pytest

from panelinspect.errors import ErrorCode, InspectionError
from panelinspect.impact import evaluate_impact, load_layout

WIDTH, HEIGHT = 200, 120


def _layout(rules):
    return load_layout(
        dict(
            width=WIDTH,
            height=HEIGHT,
            regions=[
                dict(name="line-a", role="line", rect=[20, 20, 10, 80]),
                dict(name="line-b", role="line", rect=[120, 20, 10, 80]),
                dict(name="keepout", role="keep-out", rect=[60, 40, 30, 30]),
            ],
            rules=rules,
        )
    )


def _mask(*rects) -> np.ndarray:
    mask = np.zeros((HEIGHT, WIDTH), bool)
    for x, y, w, h in rects:
        mask[y : y + h, x : x + w] = True
    return mask


class TestSchema:
    def test_unknown_predicate(self):
        with pytest.raises(InspectionError) as err:
            _layout([dict(predicate="overlaps", regions=["line-a"])])
        assert err.value.code is ErrorCode.SCHEMA_ERROR
        assert "$.rules[0]" in err.value.details["path"]

    def test_unknown_region(self):
        with pytest.raises(InspectionError) as err:
            _layout([dict(predicate="intersects", regions=["nope"])])
        assert err.value.code is ErrorCode.UNKNOWN_REGION

    def test_duplicate_region_name(self):
        with pytest.raises(InspectionError) as err:
            load_layout(
                dict(width=10, height=10, regions=[
                    dict(name="r", rect=[0, 0, 2, 2]), dict(name="r", rect=[4, 4, 2, 2])
                ])
            )
        assert err.value.code is ErrorCode.SCHEMA_ERROR

    def test_connects_needs_two_regions(self):
        with pytest.raises(InspectionError):
            _layout([dict(predicate="connects", regions=["line-a"])])

    def test_covered_area_needs_threshold(self):
        with pytest.raises(InspectionError):
            _layout([dict(predicate="covered_area_ge", regions=["line-a"])])

    def test_yaml_text_accepted(self, tmp_path):
        doc = "width: 10\nheight: 10\nregions:\n  - name: r\n    rect: [1, 1, 3, 3]\nrules: []\n"
        path = tmp_path / "layout.yaml"
        path.write_text(doc)
        layout = load_layout(path)
        assert layout.regions["r"].mask.sum() == 9

    def test_frame_mismatch(self):
        layout = _layout([])
        with pytest.raises(InspectionError) as err:
            evaluate_impact(np.zeros((10, 10), bool), layout)
        assert err.value.code is ErrorCode.FRAME_MISMATCH


class TestScenes:
    """Three constructed scenes with connected-component-verified verdicts."""

    RULES = [
        dict(rule_id="short", predicate="connects", regions=["line-a", "line-b"], verdict_label="short", severity="critical"),
        dict(rule_id="cut", predicate="severs", regions=["line-a"], verdict_label="open-circuit", severity="critical"),
        dict(rule_id="keepout-touch", predicate="intersects", regions=["keepout"], verdict_label="contamination", severity="minor"),
    ]

    def _verdicts(self, mask):
        return {v.rule_id: v.triggered for v in evaluate_impact(mask, _layout(self.RULES))}

    def test_short_scene(self):
        # A bridge overlapping one edge column of each line: connects fires,
        # but neither line is severed and the keep-out is untouched.
        mask = _mask((29, 75, 92, 4))
        assert self._verdicts(mask) == {"short": True, "cut": False, "keepout-touch": False}

    def test_cut_scene(self):
        # A bite across line-a splits it into two components.
        mask = _mask((15, 55, 20, 6))
        assert self._verdicts(mask) == {"short": False, "cut": True, "keepout-touch": False}

    def test_clean_scene(self):
        mask = _mask((160, 90, 12, 12))  # far from every region
        assert self._verdicts(mask) == {"short": False, "cut": False, "keepout-touch": False}

    def test_component_oracle(self):
        """severs semantics re-derived from scipy labeling."""
        from scipy import ndimage

        layout = _layout(self.RULES)
        line = layout.regions["line-a"].mask
        mask = _mask((15, 55, 20, 6))
        four = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], bool)
        before = ndimage.label(line, structure=four)[1]
        after = ndimage.label(line & ~mask, structure=four)[1]
        assert after > before


class TestPredicates:
    def test_covered_area_threshold_boundary(self):
        layout = _layout(
            [dict(predicate="covered_area_ge", regions=["keepout"], threshold=100, rule_id="cov")]
        )
        exactly = _mask((60, 40, 10, 10))  # 100 px inside keepout
        almost = _mask((60, 40, 9, 11))  # 99 px
        assert evaluate_impact(exactly, layout)[0].triggered
        assert not evaluate_impact(almost, layout)[0].triggered

    def test_diagonal_contact_is_not_a_short(self):
        layout = load_layout(
            dict(
                width=10,
                height=10,
                regions=[dict(name="a", rect=[0, 0, 2, 2]), dict(name="b", rect=[4, 4, 2, 2])],
                rules=[dict(predicate="connects", regions=["a", "b"], rule_id="s")],
            )
        )
        mask = np.zeros((10, 10), bool)
        mask[2, 2] = True  # touches region a only diagonally... and b diagonally
        mask[3, 3] = True
        assert not evaluate_impact(mask, layout)[0].triggered

    def test_intersects_measures_overlap_pixels(self):
        layout = _layout([dict(predicate="intersects", regions=["keepout"], rule_id="i")])
        verdict = evaluate_impact(_mask((60, 40, 5, 4)), layout)[0]
        assert verdict.triggered and verdict.measured == 20.0
