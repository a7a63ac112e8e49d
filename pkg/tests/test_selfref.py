"""Self-reference matching and segmentation, with brute-force NCC oracles."""
from __future__ import annotations

import numpy as np
import pytest

from panelinspect.errors import ErrorCode, InspectionError
from panelinspect.imgproc import DiffParams
from panelinspect.periodicity import estimate_period
from panelinspect.selfref import (
    match_background,
    mask_to_image_frame,
    offline_template_mask,
    segment_defect,
    segment_with_fallback,
    zncc_scan_map,
)
from panelinspect.synthgen import DefectSpec, PanelSpec, gen_background, inject_defect
from panelinspect.types import ImageMeta, InspectionImage, PatchBox


def zncc_brute(a: np.ndarray, b: np.ndarray) -> float:
    az = a - a.mean()
    bz = b - b.mean()
    denom = np.sqrt((az * az).sum() * (bz * bz).sum())
    return float((az * bz).sum() / denom) if denom > 1e-9 else 0.0


@pytest.fixture(scope="module")
def defect_scene():
    # Small defect: patch variance stays texture-dominated, so the whole-patch
    # match succeeds (large defects exercise the fallback paths instead).
    # Unsaturated delta: brightness shifts must move defect and background
    # identically, which clipping at 255 would break.
    image = gen_background(PanelSpec(T=128, C=8, noise_sigma=2.0, seed=60))
    dirty, gt = inject_defect(image, DefectSpec("particle", (420, 380), radius=7, intensity_delta=60))
    estimate = estimate_period(dirty)
    return dirty, gt, estimate


class TestScanMap:
    def test_equals_brute_force_everywhere(self, rng):
        image = rng.integers(0, 255, (60, 80)).astype(np.float64)
        patch = image[20:36, 30:46].copy()
        fast = zncc_scan_map(image, patch)
        for y in range(0, fast.shape[0], 7):
            for x in range(0, fast.shape[1], 9):
                window = image[y : y + 16, x : x + 16]
                assert fast[y, x] == pytest.approx(zncc_brute(window, patch), abs=1e-6)

    def test_self_placement_scores_one(self, rng):
        image = rng.normal(100, 20, (40, 40))
        patch = image[5:21, 7:23].copy()
        assert zncc_scan_map(image, patch)[5, 7] == pytest.approx(1.0, abs=1e-9)


class TestMatching:
    def test_periodic_copy_found(self, defect_scene):
        dirty, _, estimate = defect_scene
        box = PatchBox(x=308, y=268)
        match = match_background(dirty, box, estimate)
        assert match.ncc_score > 0.9
        assert not match.box.intersects(box)
        # Same-texture placement: displacement is a period multiple in x.
        assert match.displacement[0] % estimate.T == 0
        assert match.displacement[1] == 0

    def test_no_match_on_aperiodic_noise(self, rng):
        image = InspectionImage(pixels=rng.integers(0, 255, (300, 520), np.uint8).astype(np.uint8), meta=ImageMeta())
        with pytest.raises(InspectionError) as err:
            match_background(image, PatchBox(x=10, y=10), None)
        assert err.value.code is ErrorCode.NO_MATCH

    def test_out_of_bounds_box(self, defect_scene):
        dirty, _, _ = defect_scene
        with pytest.raises(InspectionError):
            match_background(dirty, PatchBox(x=900, y=600))


class TestSegmentation:
    def test_iou_against_ground_truth(self, defect_scene):
        dirty, gt, estimate = defect_scene
        box = PatchBox(x=308, y=268)
        mask, match = segment_with_fallback(dirty, box, estimate)
        frame = mask_to_image_frame(mask, box, (dirty.width, dirty.height))
        inter = (frame & gt.mask).sum()
        union = (frame | gt.mask).sum()
        assert inter / union >= 0.7
        fp = (frame & ~gt.mask).sum() / (~gt.mask).sum()
        assert fp <= 0.01

    def test_brightness_shift_leaves_mask_bit_identical(self, defect_scene):
        dirty, _, estimate = defect_scene
        box = PatchBox(x=308, y=268)
        match = match_background(dirty, box, estimate)
        base = segment_defect(dirty, box, match)
        # +15 keeps every pixel unclipped, so the pairwise difference is exact.
        assert dirty.pixels.max() + 15 <= 255
        shifted = InspectionImage(
            pixels=(dirty.pixels.astype(np.int32) + 15).astype(np.uint8),
            meta=dirty.meta,
        )
        shifted_mask = segment_defect(shifted, box, match)
        assert np.array_equal(base.bits, shifted_mask.bits)

    def test_offline_template_fp_under_jitter(self):
        """Cross-image templates break under brightness jitter; self-reference
        is the fix this baseline motivates."""
        spec = PanelSpec(T=128, C=8, noise_sigma=2.0, seed=77)
        template = gen_background(spec)
        jittered = InspectionImage(
            pixels=np.round(np.clip(template.pixels.astype(np.float64) * 1.2, 0, 255)).astype(np.uint8),
            meta=template.meta,
        )
        box = PatchBox(x=300, y=300)
        clean_fp = offline_template_mask(template, template, box).defect_pixel_count
        jitter_fp = offline_template_mask(jittered, template, box).defect_pixel_count
        assert clean_fp == 0
        assert jitter_fp > 1000

    def test_fallback_uses_reference_when_unmatched(self, defect_scene):
        dirty, gt, estimate = defect_scene
        box = PatchBox(x=308, y=268)
        # Impossible NCC threshold forces every match to fail; the referential
        # diff fallback must still segment the defect.
        mask, match = segment_with_fallback(dirty, box, estimate, theta_ncc=1.1)
        assert match is None
        assert mask.defect_pixel_count > 50

    def test_mask_frame_embedding(self):
        from panelinspect.selfref import BinaryMask

        bits = np.zeros((224, 224), bool)
        bits[10, 20] = True
        frame = mask_to_image_frame(BinaryMask(bits=bits), PatchBox(x=100, y=200), (1024, 768))
        assert frame[210, 120]
        assert frame.sum() == 1
