"""Bridging helpers from generated corpora to patch-level training samples."""
from __future__ import annotations

import numpy as np

from .classify import ChannelMode, ChannelStack, build_channel_stack, patch_rgb_stack
from .errors import ErrorCode, InspectionError
from .periodicity import PeriodEstimate
from .selfref import BinaryMask, match_background
from .synthgen import CorpusItem, load_image, load_mask
from .types import InspectionImage, PatchBox

PATCH = 224


def defect_box_for(item: CorpusItem, width: int, height: int) -> PatchBox:
    """224 box centered on the ground-truth centroid, clamped in-bounds."""
    if item.centroid is None:
        raise InspectionError(ErrorCode.SPEC_INVALID, f"{item.image_id} has no defect")
    cx, cy = item.centroid
    x = int(np.clip(round(cx) - PATCH // 2, 0, width - PATCH))
    y = int(np.clip(round(cy) - PATCH // 2, 0, height - PATCH))
    return PatchBox(x=x, y=y)


def known_period_estimate(item: CorpusItem, width: int) -> PeriodEstimate:
    """Estimate built from the manifest's recorded period (skips re-estimation)."""
    return PeriodEstimate(T=item.T, C=width // item.T, per_subimage_T=[], confidence=1.0)


def class_sample(
    image: InspectionImage, item: CorpusItem, mode: ChannelMode, theta_ncc: float = 0.8
) -> ChannelStack:
    """Channel stack for one defect item; background from self-reference
    matching, mask from the stored ground truth."""
    box = defect_box_for(item, image.width, image.height)
    match = None
    if mode in (ChannelMode.RGB_G, ChannelMode.RGB2):
        estimate = known_period_estimate(item, image.width)
        try:
            match = match_background(image, box, estimate, theta_ncc)
        except InspectionError as err:
            if err.code is not ErrorCode.NO_MATCH:
                raise
            # A big defect can drag whole-patch NCC under the threshold even
            # though the period-shifted copy is the right background; for
            # generator images periodicity is ground truth, so accept the best
            # seeded placement.
            match = match_background(image, box, estimate, theta_ncc=-1.0)
    mask = None
    if mode is ChannelMode.RGB_S:
        gt = load_mask(item)
        mask = BinaryMask(bits=box.crop(gt))
    return build_channel_stack(image, box, match, mask, mode)


def class_samples(
    items: list[CorpusItem], mode: ChannelMode, split: str | None = None
) -> list[tuple[ChannelStack, str]]:
    """(stack, defect-class) pairs for the defect items of one split."""
    out = []
    for item in items:
        if item.defect_class is None:
            continue
        if split is not None and item.split != split:
            continue
        out.append((class_sample(load_image(item), item, mode), item.defect_class))
    return out


def binary_patch_samples(
    items: list[CorpusItem],
    split: str | None = None,
    negatives_per_clean: int = 10,
    negatives_per_defect: int = 3,
    seed: int = 0,
) -> list[tuple[ChannelStack, str]]:
    """RGB (stack, defect|no_defect) pairs for detector training.

    Samples are drawn from the same sliding-window grid the detector scans at
    inference time: every grid window containing the defect centroid is a
    positive; negatives come from clean-image grid windows plus
    defect-untouched windows of defect images (same texture, no defect).
    """
    from .patchdetect import slide_windows

    rng = np.random.default_rng(seed)
    out = []
    for item in items:
        if split is not None and item.split != split:
            continue
        image = load_image(item)
        anchors = [PatchBox(x=x, y=y) for x, y in slide_windows((image.width, image.height)).anchors]
        if item.defect_class is not None:
            gt = load_mask(item)
            negatives = []
            for box in anchors:
                if box.contains(*item.centroid):
                    out.append((patch_rgb_stack(box.crop(image.pixels)), "defect"))
                elif not box.crop(gt).any():
                    negatives.append(box)
            picks = rng.permutation(len(negatives))[:negatives_per_defect]
            for i in picks:
                out.append((patch_rgb_stack(negatives[i].crop(image.pixels)), "no_defect"))
        else:
            picks = rng.permutation(len(anchors))[:negatives_per_clean]
            for i in picks:
                out.append((patch_rgb_stack(anchors[i].crop(image.pixels)), "no_defect"))
    return out
