"""Difference-image processing oracles: Otsu, morphology, components."""
from __future__ import annotations

import numpy as np
import pytest

from panelinspect.imgproc import DiffParams, binarize_diff, connected_components, disk, otsu_threshold


def otsu_oracle(values: np.ndarray) -> float:
    """Brute force over every candidate threshold bin."""
    hist, edges = np.histogram(values.ravel(), bins=256, range=(0.0, 256.0))
    centers = (edges[:-1] + edges[1:]) / 2.0
    best_t, best_v = 0.0, -1.0
    for k in range(256):
        w1, w2 = hist[: k + 1].sum(), hist[k + 1 :].sum()
        if w1 == 0 or w2 == 0:
            continue
        m1 = (hist[: k + 1] * centers[: k + 1]).sum() / w1
        m2 = (hist[k + 1 :] * centers[k + 1 :]).sum() / w2
        v = w1 * w2 * (m1 - m2) ** 2
        if v > best_v:
            best_v, best_t = v, centers[k]
    return best_t


class TestOtsu:
    def test_matches_brute_force_on_bimodal(self, rng):
        values = np.concatenate([rng.normal(20, 5, 4000), rng.normal(180, 10, 1000)])
        values = np.clip(values, 0, 255)
        assert otsu_threshold(values) == pytest.approx(otsu_oracle(values))

    def test_matches_brute_force_on_random(self, rng):
        for _ in range(5):
            values = np.clip(rng.normal(80, 50, 2000), 0, 255)
            assert otsu_threshold(values) == pytest.approx(otsu_oracle(values))

    def test_empty_input(self):
        assert otsu_threshold(np.array([])) == 0.0


class TestBinarize:
    def test_clean_noise_yields_empty_mask(self, rng):
        diff = np.abs(rng.normal(0, 2, (100, 100)))
        mask = binarize_diff(diff, DiffParams())
        assert mask.sum() == 0  # noise floor keeps Otsu from splitting noise

    def test_bright_square_survives(self):
        diff = np.zeros((100, 100))
        diff[30:60, 40:70] = 120.0
        mask = binarize_diff(diff, DiffParams())
        assert mask[40, 50]
        assert not mask[5, 5]

    def test_speckle_removed_by_opening(self, rng):
        diff = np.zeros((80, 80))
        diff[10, 10] = 200.0  # single-pixel speckle
        diff[40:60, 40:60] = 200.0
        mask = binarize_diff(diff, DiffParams(blur_radius=0))
        assert not mask[10, 10]
        assert mask[50, 50]

    def test_fixed_threshold_mode(self):
        diff = np.full((50, 50), 30.0)
        diff[20:30, 20:30] = 90.0
        params = DiffParams(threshold_mode="fixed", fixed_threshold=60.0, blur_radius=0)
        mask = binarize_diff(diff, params)
        assert mask[25, 25] and not mask[0, 0]


class TestComponents:
    def test_counts_and_areas_match_label_oracle(self, rng):
        from scipy import ndimage

        mask = rng.random((120, 120)) > 0.7
        got = connected_components(mask, min_area=1)
        labels, count = ndimage.label(mask, structure=np.ones((3, 3), bool))
        areas = sorted((labels == i).sum() for i in range(1, count + 1))
        assert sorted(r["area"] for r in got) == areas

    def test_min_area_filters(self):
        mask = np.zeros((50, 50), bool)
        mask[0:2, 0:2] = True  # area 4
        mask[20:30, 20:30] = True  # area 100
        got = connected_components(mask, min_area=30)
        assert len(got) == 1 and got[0]["area"] == 100

    def test_sorted_largest_first(self):
        mask = np.zeros((60, 60), bool)
        mask[0:5, 0:5] = True
        mask[20:40, 20:40] = True
        got = connected_components(mask, min_area=1)
        assert [r["area"] for r in got] == [400, 25]

    def test_diagonal_touch_is_one_component(self):
        mask = np.zeros((10, 10), bool)
        mask[2, 2] = mask[3, 3] = True
        assert len(connected_components(mask, min_area=1)) == 1


def test_disk_is_symmetric():
    d = disk(3)
    assert np.array_equal(d, d[::-1]) and np.array_equal(d, d[:, ::-1])
    assert d[3, 3]
