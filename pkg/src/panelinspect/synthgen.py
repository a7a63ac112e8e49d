"""Synthetic periodic-panel generator with pixel-exact ground truth.

Stands in for a production corpus: horizontally periodic backgrounds with
controllable period, jitter and noise, plus injected defects whose masks are
exactly the set of modified pixels.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .errors import ErrorCode, InspectionError
from .types import ImageMeta, InspectionImage

DEFECT_CLASSES = ("blob", "scratch", "particle", "stain")
CLASS_CATALOGUE = DEFECT_CLASSES + ("MISC",)


@dataclass(frozen=True)
class PanelSpec:
    T: int = 128
    C: int = 8
    width: int = 1024
    height: int = 768
    n_stripes: int = 5
    n_rects: int = 3
    vertical_period: int = 96
    # Palette cap leaves headroom so jitter and defect deltas stay in-range.
    palette_max: int = 160
    brightness_jitter: float = 0.0
    hue_jitter: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.T < 2 or self.C < 2 or self.T * self.C > self.width:
            raise InspectionError(ErrorCode.SPEC_INVALID, f"T*C must fit width, got T={self.T} C={self.C}")
        if not (0 <= self.brightness_jitter <= 0.5 and 0 <= self.hue_jitter <= 0.5):
            raise InspectionError(ErrorCode.SPEC_INVALID, "jitters must lie in [0, 0.5]")
        if self.noise_sigma < 0:
            raise InspectionError(ErrorCode.SPEC_INVALID, "noise_sigma must be >= 0")


@dataclass
class DefectSpec:
    defect_class: str
    center: tuple[int, int]
    radius: int = 25
    length: int = 120
    thickness: int = 4
    radii: tuple[int, int] = (35, 45)
    angle_deg: float = 30.0
    intensity_delta: int = 155


@dataclass
class GroundTruth:
    mask: np.ndarray
    defect_class: str
    centroid: tuple[float, float]


def _tile_has_subperiod(tile: np.ndarray, t: int) -> bool:
    """True when any analysis window of the tile nearly repeats inside [0, T).

    Checked on several row bands, not only the column mean: rectangle texture
    varies vertically and a single band can be far less balanced than the mean.
    """
    guard = max(4, t // 8)
    lum = tile @ np.array([0.299, 0.587, 0.114])
    h = lum.shape[0]
    band = min(65, h)
    starts = {0, h // 3, max(0, h // 2 - band // 2), max(0, h - band)}
    curves = [lum[s : s + band].sum(axis=0) for s in starts]
    curves.append(lum.sum(axis=0))
    for proj in curves:
        z = proj - proj.mean()
        xi = kernels.samsf(z)
        if xi[0] <= 0.0 or xi[guard : t - guard].max() > 0.85 * xi[0]:
            return True
    return False


def _period_tile(spec: PanelSpec, rng: np.random.Generator) -> np.ndarray:
    """One (height, T, 3) tile: vertical stripes plus vertically-tiled rectangles.

    Redraws patterns that carry an accidental sub-period, so T is the true
    fundamental period of the generated background.
    """
    for _ in range(50):
        tile = _draw_tile(spec, rng)
        if not _tile_has_subperiod(tile, spec.T):
            return tile
    raise InspectionError(ErrorCode.SPEC_INVALID, "could not draw a tile without sub-periods")


def _draw_tile(spec: PanelSpec, rng: np.random.Generator) -> np.ndarray:
    t, h = spec.T, spec.height
    cuts = np.sort(rng.choice(np.arange(1, t), size=min(spec.n_stripes - 1, t - 1), replace=False))
    bounds = np.concatenate([[0], cuts, [t]])
    tile = np.zeros((h, t, 3), dtype=np.float64)
    for i in range(len(bounds) - 1):
        tile[:, bounds[i] : bounds[i + 1]] = rng.integers(30, spec.palette_max, size=3)
    tv = min(spec.vertical_period, h)
    for _ in range(spec.n_rects):
        rw = int(rng.integers(4, max(5, t // 2)))
        rh = int(rng.integers(4, max(5, tv // 2)))
        rx = int(rng.integers(0, t - rw + 1))
        ry = int(rng.integers(0, tv - rh + 1))
        delta = rng.integers(-30, 31, size=3)
        for y0 in range(0, h, tv):
            tile[y0 + ry : y0 + ry + rh, rx : rx + rw] += delta
    return np.clip(tile, 10, spec.palette_max)


def gen_background(spec: PanelSpec) -> InspectionImage:
    """Horizontally periodic background; jitter is global, noise is per-pixel."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    tile = _period_tile(spec, rng)
    cols = np.arange(spec.width) % spec.T
    pixels = tile[:, cols]
    scale = 1.0 + rng.uniform(-spec.brightness_jitter, spec.brightness_jitter)
    channel_scale = 1.0 + rng.uniform(-spec.hue_jitter, spec.hue_jitter, size=3)
    pixels = np.round(np.clip(pixels * scale * channel_scale, 0, 255))
    if spec.noise_sigma > 0:
        pixels = np.clip(pixels + rng.normal(0, spec.noise_sigma, pixels.shape), 0, 255)
    meta = ImageMeta(image_id=f"synth-{spec.seed}")
    return InspectionImage(pixels=np.round(pixels).astype(np.uint8), meta=meta)


def _disk_mask(h: int, w: int, cx: int, cy: int, r: float) -> np.ndarray:
    yy, xx = np.ogrid[:h, :w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _ellipse_mask(h, w, cx, cy, rx, ry, angle_deg) -> np.ndarray:
    yy, xx = np.ogrid[:h, :w]
    th = np.deg2rad(angle_deg)
    u = (xx - cx) * np.cos(th) + (yy - cy) * np.sin(th)
    v = -(xx - cx) * np.sin(th) + (yy - cy) * np.cos(th)
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _segment_mask(h, w, cx, cy, length, thickness, angle_deg) -> np.ndarray:
    yy, xx = np.mgrid[:h, :w]
    th = np.deg2rad(angle_deg)
    dx, dy = np.cos(th), np.sin(th)
    px, py = xx - cx, yy - cy
    t = np.clip(px * dx + py * dy, -length / 2, length / 2)
    dist2 = (px - t * dx) ** 2 + (py - t * dy) ** 2
    return dist2 <= (thickness / 2.0) ** 2


def defect_mask(dspec: DefectSpec, height: int, width: int) -> np.ndarray:
    cx, cy = dspec.center
    if dspec.defect_class in ("blob", "particle"):
        return _disk_mask(height, width, cx, cy, dspec.radius)
    if dspec.defect_class == "scratch":
        return _segment_mask(height, width, cx, cy, dspec.length, dspec.thickness, dspec.angle_deg)
    if dspec.defect_class == "stain":
        return _ellipse_mask(height, width, cx, cy, dspec.radii[0], dspec.radii[1], dspec.angle_deg)
    raise InspectionError(ErrorCode.SPEC_INVALID, f"unknown defect class {dspec.defect_class}")


def inject_defect(image: InspectionImage, dspec: DefectSpec) -> tuple[InspectionImage, GroundTruth]:
    """Add the defect's intensity delta to exactly the mask pixels."""
    h, w = image.height, image.width
    cx, cy = dspec.center
    if not (0 <= cx < w and 0 <= cy < h):
        raise InspectionError(ErrorCode.OUT_OF_BOUNDS, f"defect center {dspec.center} outside image")
    mask = defect_mask(dspec, h, w)
    if not mask.any():
        raise InspectionError(ErrorCode.OUT_OF_BOUNDS, "defect geometry rasterizes to no pixels")
    pixels = image.pixels.astype(np.int32)
    region = mask if pixels.ndim == 2 else mask[:, :, None]
    pixels = np.clip(pixels + dspec.intensity_delta * region, 0, 255).astype(np.uint8)
    ys, xs = np.nonzero(mask)
    gt = GroundTruth(mask=mask, defect_class=dspec.defect_class, centroid=(float(xs.mean()), float(ys.mean())))
    return InspectionImage(pixels=pixels, meta=image.meta), gt


def split_of(image_id: str, seed: int) -> str:
    """Stable 8/1/1-ish split by seeded hash; gen_dataset makes counts exact."""
    digest = hashlib.sha256(f"{seed}:{image_id}".encode()).hexdigest()
    bucket = int(digest[:8], 16) % 10
    return "train" if bucket < 8 else ("validate" if bucket == 8 else "test")


def assign_splits(image_ids: list[str], seed: int) -> dict[str, str]:
    """Exact 8/1/1 split: rank ids by seeded hash, slice by ratio."""
    ranked = sorted(image_ids, key=lambda i: hashlib.sha256(f"{seed}:{i}".encode()).hexdigest())
    n = len(ranked)
    n_train = round(n * 0.8)
    n_val = round(n * 0.1)
    out = {}
    for pos, image_id in enumerate(ranked):
        if pos < n_train:
            out[image_id] = "train"
        elif pos < n_train + n_val:
            out[image_id] = "validate"
        else:
            out[image_id] = "test"
    return out


@dataclass
class CorpusSpec:
    n_images: int = 500
    defect_fraction: float = 0.7
    periods: tuple[int, ...] = (64, 96, 128, 192, 256)
    width: int = 1024
    height: int = 768
    brightness_jitter: float = 0.1
    noise_sigma: float = 2.0
    n_recipes: int = 4
    confound: str = "none"  # "none" | "background-bias"
    # Probability that a biased train image actually gets the class-linked
    # recipe. A deterministic link (1.0) lets any model absorb the background
    # shortcut without residual loss; a strong-but-partial link keeps recipe
    # features lossy so background-aware inputs can pay off.
    confound_strength: float = 0.8
    classes: tuple[str, ...] = DEFECT_CLASSES
    seed: int = 0

    def __post_init__(self):
        if self.n_images < 10:
            raise InspectionError(ErrorCode.SPEC_INVALID, "corpus needs n_images >= 10")


# Per-class geometry and delta ranges; areas overlap on purpose so that shape
# alone does not fully determine the class.
_CLASS_PARAMS = {
    "blob": dict(delta=(145, 165), radius=(14, 34)),
    # Particles are specular bright points: their delta clears the brightest
    # jittered background, like real foreign-material glints.
    "particle": dict(delta=(215, 235), radius=(7, 13)),
    "scratch": dict(delta=(155, 175), length=(80, 200), thickness=(3, 6)),
    "stain": dict(delta=(130, 150), radii=(22, 55)),
}


def _random_defect(cls: str, rng: np.random.Generator, width: int, height: int) -> DefectSpec:
    p = _CLASS_PARAMS[cls]
    margin = 64
    cx = int(rng.integers(margin, width - margin))
    cy = int(rng.integers(margin, height - margin))
    delta = int(rng.integers(*p["delta"]))
    if cls in ("blob", "particle"):
        return DefectSpec(cls, (cx, cy), radius=int(rng.integers(*p["radius"])), intensity_delta=delta)
    if cls == "scratch":
        return DefectSpec(
            cls,
            (cx, cy),
            length=int(rng.integers(*p["length"])),
            thickness=int(rng.integers(*p["thickness"])),
            angle_deg=float(rng.uniform(0, 180)),
            intensity_delta=delta,
        )
    r1 = int(rng.integers(*p["radii"]))
    r2 = int(rng.integers(*p["radii"]))
    return DefectSpec(cls, (cx, cy), radii=(r1, r2), angle_deg=float(rng.uniform(0, 180)), intensity_delta=delta)


@dataclass
class CorpusItem:
    image_id: str
    image_path: str
    mask_path: str | None
    label: str  # "defect" | "no_defect"
    defect_class: str | None
    recipe: int
    split: str
    T: int
    centroid: tuple[float, float] | None


def gen_dataset(corpus: CorpusSpec, out_dir: str | Path) -> list[CorpusItem]:
    """Write images, masks and a line-delimited manifest; deterministic per seed."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(corpus.seed)
    ids = [f"img-{corpus.seed}-{i:04d}" for i in range(corpus.n_images)]
    splits = assign_splits(ids, corpus.seed)
    items: list[CorpusItem] = []
    for i, image_id in enumerate(ids):
        has_defect = rng.random() < corpus.defect_fraction
        cls = str(rng.choice(corpus.classes)) if has_defect else None
        if corpus.confound == "background-bias" and splits[image_id] != "train":
            # Held-out images come from unseen background recipes: the
            # deployment story is a new product whose texture was never
            # trained on, so background-derived features stop transferring.
            recipe = corpus.n_recipes + int(rng.integers(0, corpus.n_recipes))
        elif (
            corpus.confound == "background-bias"
            and has_defect
            and rng.random() < corpus.confound_strength
        ):
            # Training images: background recipe tracks the class.
            recipe = corpus.classes.index(cls) % corpus.n_recipes
        else:
            recipe = int(rng.integers(0, corpus.n_recipes))
        t = int(rng.choice(corpus.periods))
        spec = PanelSpec(
            T=t,
            C=corpus.width // t,
            width=corpus.width,
            height=corpus.height,
            brightness_jitter=corpus.brightness_jitter,
            noise_sigma=0.0,
            seed=corpus.seed * 10_000 + recipe * 1_000 + i % 97,
        )
        # Recipe fixes the tile; the per-image seed varies jitter/noise only.
        tile_rng = np.random.default_rng(corpus.seed * 131 + recipe)
        tile = _period_tile(spec, tile_rng)
        img_rng = np.random.default_rng(corpus.seed * 977 + i)
        cols = np.arange(spec.width) % spec.T
        pixels = tile[:, cols]
        scale = 1.0 + img_rng.uniform(-corpus.brightness_jitter, corpus.brightness_jitter)
        pixels = np.round(np.clip(pixels * scale, 0, 255))
        image = InspectionImage(
            pixels=pixels.astype(np.uint8), meta=ImageMeta(image_id=image_id)
        )
        gt = None
        if has_defect:
            dspec = _random_defect(cls, img_rng, corpus.width, corpus.height)
            image, gt = inject_defect(image, dspec)
        if corpus.noise_sigma > 0:
            noisy = image.pixels.astype(np.float64) + img_rng.normal(
                0, corpus.noise_sigma, image.pixels.shape
            )
            image = InspectionImage(
                pixels=np.round(np.clip(noisy, 0, 255)).astype(np.uint8), meta=image.meta
            )
        image_path = out_dir / "images" / f"{image_id}.png"
        Image.fromarray(image.pixels).save(image_path)
        mask_path = None
        if gt is not None:
            mask_path = out_dir / "masks" / f"{image_id}.png"
            Image.fromarray((gt.mask * np.uint8(255))).save(mask_path)
        items.append(
            CorpusItem(
                image_id=image_id,
                image_path=str(image_path),
                mask_path=str(mask_path) if mask_path else None,
                label="defect" if has_defect else "no_defect",
                defect_class=cls,
                recipe=recipe,
                split=splits[image_id],
                T=t,
                centroid=gt.centroid if gt else None,
            )
        )
    with open(out_dir / "manifest.jsonl", "w") as fh:
        for item in items:
            fh.write(json.dumps(item.__dict__) + "\n")
    return items


def load_manifest(out_dir: str | Path) -> list[CorpusItem]:
    items = []
    with open(Path(out_dir) / "manifest.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            rec["centroid"] = tuple(rec["centroid"]) if rec["centroid"] else None
            items.append(CorpusItem(**rec))
    return items


def load_image(item: CorpusItem) -> InspectionImage:
    pixels = np.asarray(Image.open(item.image_path))
    return InspectionImage(pixels=pixels, meta=ImageMeta(image_id=item.image_id))


def load_mask(item: CorpusItem) -> np.ndarray | None:
    if item.mask_path is None:
        return None
    return np.asarray(Image.open(item.mask_path)) > 0
