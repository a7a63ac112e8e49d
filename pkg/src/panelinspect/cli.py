"""Command-line entry points for every pipeline stage and the service."""
from __future__ import annotations

import dataclasses
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml
from PIL import Image

from .classify import (
    ChannelMode,
    TrainConfig,
    evaluate_classifier,
    load_model,
    ReferencePatchClassifier,
    save_model,
    train_reference_classifier,
)
from .corpus import binary_patch_samples, class_samples, defect_box_for
from .errors import ErrorCode, InspectionError
from .imgproc import DiffParams
from .impact import load_layout
from .patchdetect import detect as detect_patches
from .periodicity import estimate_period
from .pipeline import PipelineConfig, run_pipeline
from .reference import (
    AutolabelPolicy,
    autolabel_dataset,
    build_reference,
    diff_localize,
    sample_negative_patches,
    surrogate_heatmap,
)
from .selfref import segment_with_fallback
from .synthgen import CorpusSpec, gen_dataset, load_image, load_manifest
from .types import ImageMeta, InspectionImage, PatchBox

_CONFIG_KEYS = {
    "theta_det": float,
    "theta_ncc": float,
    "theta_hm": float,
    "binarization": str,  # "otsu" | "fixed"
    "fixed_threshold": int,
    "blur_radius": int,
    "morph_radius": int,
    "min_area": int,
    "channel_mode": str,
    "seed": int,
}

_DEFAULTS = dict(
    theta_det=0.5,
    theta_ncc=0.8,
    theta_hm=0.3,
    binarization="otsu",
    fixed_threshold=40,
    blur_radius=2,
    morph_radius=2,
    min_area=30,
    channel_mode="RGB_G",
    seed=0,
)


def _load_config(path: str | None) -> dict:
    cfg = dict(_DEFAULTS)
    if path:
        doc = yaml.safe_load(Path(path).read_text()) or {}
        unknown = set(doc) - set(_CONFIG_KEYS)
        if unknown:
            raise click.UsageError(f"unknown config keys: {sorted(unknown)}")
        for key, value in doc.items():
            cfg[key] = _CONFIG_KEYS[key](value)
    return cfg


def _diff_params(cfg: dict) -> DiffParams:
    return DiffParams(
        blur_radius=cfg["blur_radius"],
        threshold_mode=cfg["binarization"],
        fixed_threshold=cfg["fixed_threshold"],
        morph_radius=cfg["morph_radius"],
        min_area=cfg["min_area"],
    )


def _read_image(path: str) -> InspectionImage:
    pixels = np.asarray(Image.open(path))
    return InspectionImage(pixels=pixels, meta=ImageMeta(image_id=Path(path).stem))


def _emit(payload: dict, as_json: bool, lines: list[str]) -> None:
    if as_json:
        click.echo(json.dumps(dict(payload, schema="panelinspect/v1"), sort_keys=True))
    else:
        for line in lines:
            click.echo(line)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InspectionError as err:
            click.echo(
                json.dumps(dict(error=err.code.value, message=str(err))), err=True
            )
            sys.exit(1)

    return wrapper


_ERROR_EPILOG = "Error codes (exit 1, machine-readable on stderr):\n  " + "\n  ".join(
    code.value for code in ErrorCode
)


@click.group(epilog=_ERROR_EPILOG)
def main():
    """Visual inspection toolkit for periodically patterned panel imagery."""


_config_opt = click.option("--config", "config_path", type=click.Path(exists=True), default=None)
_json_opt = click.option("--json", "as_json", is_flag=True, default=False)


@main.command("estimate-period")
@click.argument("image_path", type=click.Path(exists=True))
@_config_opt
@_json_opt
@_handle_errors
def cmd_estimate_period(image_path, config_path, as_json):
    """Recover the horizontal pattern period of an image."""
    estimate = estimate_period(_read_image(image_path))
    _emit(
        dict(
            T=estimate.T,
            C=estimate.C,
            confidence=estimate.confidence,
            clean_offset=estimate.clean_offset,
            dirty_bands=estimate.dirty_bands,
        ),
        as_json,
        [
            f"T={estimate.T} C={estimate.C} confidence={estimate.confidence:.3f}",
            f"clean_offset={estimate.clean_offset} dirty_bands={estimate.dirty_bands}",
        ],
    )


@main.command("reconstruct")
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_config_opt
@_json_opt
@_handle_errors
def cmd_reconstruct(image_path, out_path, config_path, as_json):
    """Write the defect-free referential image rebuilt from a clean period."""
    image = _read_image(image_path)
    ref = build_reference(image, estimate_period(image))
    Image.fromarray(ref.pixels.astype(np.uint8)).save(out_path)
    _emit(
        dict(out=out_path, T=ref.T, C=ref.C, width=ref.pixels.shape[1]),
        as_json,
        [f"wrote {out_path} ({ref.pixels.shape[1]} columns, T={ref.T})"],
    )


@main.command("localize")
@click.argument("image_path", type=click.Path(exists=True))
@_config_opt
@_json_opt
@_handle_errors
def cmd_localize(image_path, config_path, as_json):
    """Coarse defect regions from the referential-image difference."""
    cfg = _load_config(config_path)
    image = _read_image(image_path)
    ref = build_reference(image, estimate_period(image))
    regions = diff_localize(image, ref, _diff_params(cfg))
    payload = dict(regions=[dataclasses.asdict(r) for r in regions])
    _emit(
        payload,
        as_json,
        [f"{len(regions)} region(s)"]
        + [f"  bbox={r.bbox} area={r.area} centroid=({r.centroid[0]:.1f}, {r.centroid[1]:.1f})" for r in regions],
    )


@main.command("detect")
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@_config_opt
@_json_opt
@_handle_errors
def cmd_detect(image_path, model_path, config_path, as_json):
    """Sliding-window defect patch detection with a trained binary model."""
    cfg = _load_config(config_path)
    classifier = ReferencePatchClassifier(load_model(Path(model_path).read_bytes()))
    boxes, top = detect_patches(classifier, _read_image(image_path), threshold=cfg["theta_det"])
    _emit(
        dict(boxes=[dataclasses.astuple(b) for b in boxes], top_score=top),
        as_json,
        [f"top_score={top:.3f}"] + [f"  box x={b.x} y={b.y} {b.width}x{b.height}" for b in boxes],
    )


@main.command("segment")
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--x", required=True, type=int)
@click.option("--y", required=True, type=int)
@click.option("--size", default=224, type=click.Choice(["224", "448"], case_sensitive=False))
@click.option("--out", "out_path", default=None, type=click.Path())
@_config_opt
@_json_opt
@_handle_errors
def cmd_segment(image_path, x, y, size, out_path, config_path, as_json):
    """Self-reference segmentation of the defect pixels inside one patch."""
    cfg = _load_config(config_path)
    image = _read_image(image_path)
    box = PatchBox(x=x, y=y, width=int(size), height=int(size))
    try:
        estimate = estimate_period(image)
    except InspectionError:
        estimate = None
    mask, match = segment_with_fallback(
        image, box, estimate, theta_ncc=cfg["theta_ncc"], params=_diff_params(cfg)
    )
    if out_path:
        Image.fromarray(mask.bits.astype(np.uint8) * 255).save(out_path)
    _emit(
        dict(
            defect_pixels=mask.defect_pixel_count,
            ncc=match.ncc_score if match else None,
            background_box=dataclasses.astuple(match.box) if match else None,
            out=out_path,
        ),
        as_json,
        [
            f"defect_pixels={mask.defect_pixel_count}"
            + (f" ncc={match.ncc_score:.3f} background=({match.box.x}, {match.box.y})" if match else " (fallback path)")
        ],
    )


@main.command("classify")
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--x", required=True, type=int)
@click.option("--y", required=True, type=int)
@_config_opt
@_json_opt
@_handle_errors
def cmd_classify(image_path, model_path, x, y, config_path, as_json):
    """Classify the defect type of one patch with a trained model."""
    from .classify import build_channel_stack

    cfg = _load_config(config_path)
    image = _read_image(image_path)
    model = load_model(Path(model_path).read_bytes())
    box = PatchBox(x=x, y=y)
    try:
        estimate = estimate_period(image)
    except InspectionError:
        estimate = None
    mask, match = segment_with_fallback(
        image, box, estimate, theta_ncc=cfg["theta_ncc"], params=_diff_params(cfg)
    )
    stack = build_channel_stack(image, box, match, mask, model.mode)
    scores = model.predict(stack)
    top = max(scores, key=scores.get)
    _emit(
        dict(scores=scores, top_class=top),
        as_json,
        [f"{cls}\t{p:.4f}" for cls, p in sorted(scores.items(), key=lambda kv: -kv[1])] + [f"top: {top}"],
    )


@main.command("inspect")
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True), help="binary patch model")
@click.option("--classes-model", "classes_path", default=None, type=click.Path(exists=True))
@click.option("--layout", "layout_path", default=None, type=click.Path(exists=True))
@_config_opt
@_json_opt
@_handle_errors
def cmd_inspect(image_path, model_path, classes_path, layout_path, config_path, as_json):
    """Full pipeline: detect, segment, classify, impact."""
    cfg = _load_config(config_path)
    classifier = ReferencePatchClassifier(load_model(Path(model_path).read_bytes()))
    classes_model = load_model(Path(classes_path).read_bytes()) if classes_path else None
    layout = load_layout(layout_path) if layout_path else None
    result = run_pipeline(
        _read_image(image_path),
        classifier,
        classes_model,
        layout,
        PipelineConfig(
            theta_det=cfg["theta_det"],
            theta_ncc=cfg["theta_ncc"],
            diff_params=_diff_params(cfg),
        ),
    )
    defects = [
        dict(
            box=dataclasses.astuple(d.patch_box),
            ncc=d.ncc,
            top_class=d.top_class,
            defect_pixels=d.mask.defect_pixel_count,
            impact=[dataclasses.asdict(v) for v in d.impact],
        )
        for d in result.defects
    ]
    _emit(
        dict(verdict=result.verdict, top_score=result.top_score, defects=defects, timings_ms=result.timings_ms),
        as_json,
        [f"verdict: {result.verdict} (top_score={result.top_score:.3f})"]
        + [f"  box={d['box']} class={d['top_class']} pixels={d['defect_pixels']}" for d in defects],
    )


@main.command("gen")
@click.argument("out_dir", type=click.Path())
@click.option("--n", "n_images", default=50, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--confound", default="none", type=click.Choice(["none", "background-bias"]))
@click.option("--noise-sigma", default=2.0, type=float)
@_json_opt
@_handle_errors
def cmd_gen(out_dir, n_images, seed, confound, noise_sigma, as_json):
    """Generate a synthetic corpus with exact ground truth."""
    items = gen_dataset(
        CorpusSpec(n_images=n_images, seed=seed, confound=confound, noise_sigma=noise_sigma), out_dir
    )
    n_defect = sum(1 for it in items if it.defect_class)
    _emit(
        dict(out_dir=str(out_dir), n_images=len(items), n_defect=n_defect),
        as_json,
        [f"wrote {len(items)} images ({n_defect} with defects) to {out_dir}"],
    )


@main.command("autolabel")
@click.argument("corpus_dir", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--negatives", default=0, type=int)
@_config_opt
@_json_opt
@_handle_errors
def cmd_autolabel(corpus_dir, out_path, negatives, config_path, as_json):
    """Propose patch labels for a generated corpus; write the patch manifest."""
    from .manifest import records_from_candidates, write_manifest

    cfg = _load_config(config_path)
    items = load_manifest(corpus_dir)
    labeled = [(load_image(it), it.label) for it in items]

    def heatmaps(image):
        return surrogate_heatmap(image, estimate_period(image))

    candidates, warnings = autolabel_dataset(
        labeled, heatmaps, AutolabelPolicy(theta_hm=cfg["theta_hm"]), diff_params=_diff_params(cfg)
    )
    if negatives:
        clean = [img for img, label in labeled if label == "no_defect"]
        candidates += sample_negative_patches(clean, negatives, cfg["seed"])
    paths = {it.image_id: it.image_path for it in items}
    records = records_from_candidates(candidates, paths, split_seed=cfg["seed"])
    write_manifest(records, out_path)
    accepted = sum(1 for c in candidates if c.status == "accepted")
    _emit(
        dict(candidates=len(candidates), accepted=accepted, warnings=warnings, out=out_path),
        as_json,
        [f"{len(candidates)} candidate(s), {accepted} auto-accepted, {len(warnings)} warning(s)"],
    )


@main.command("train")
@click.argument("corpus_dir", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--objective", default="detect", type=click.Choice(["detect", "classes"]))
@click.option("--mode", default="RGB", type=click.Choice([m.value for m in ChannelMode]))
@_config_opt
@_json_opt
@_handle_errors
def cmd_train(corpus_dir, out_path, objective, mode, config_path, as_json):
    """Train the patch detector or the defect-type classifier on a corpus."""
    cfg = _load_config(config_path)
    items = load_manifest(corpus_dir)
    channel_mode = ChannelMode(mode)
    if objective == "detect":
        samples = binary_patch_samples(items, split="train", seed=cfg["seed"])
        class_list = ["defect", "no_defect"]
        channel_mode = ChannelMode.RGB
    else:
        samples = class_samples(items, channel_mode, split="train")
        class_list = sorted({label for _, label in samples})
    model = train_reference_classifier(
        samples, channel_mode, class_list, TrainConfig(), seed=cfg["seed"]
    )
    Path(out_path).write_bytes(save_model(model))
    _emit(
        dict(out=out_path, classes=class_list, n_samples=len(samples), final_loss=model.train_history[-1]),
        as_json,
        [f"trained on {len(samples)} samples; final loss {model.train_history[-1]:.4f}; wrote {out_path}"],
    )


@main.command("eval")
@click.argument("corpus_dir", type=click.Path(exists=True))
@click.option("--modes", default="RGB,RGB_G", help="comma-separated channel modes")
@_config_opt
@_json_opt
@_handle_errors
def cmd_eval(corpus_dir, modes, config_path, as_json):
    """Train per-mode defect-type classifiers and print the accuracy table."""
    cfg = _load_config(config_path)
    items = load_manifest(corpus_dir)
    mode_list = [ChannelMode(m.strip()) for m in modes.split(",") if m.strip()]
    models, test_samples = {}, {}
    for m in mode_list:
        train = class_samples(items, m, split="train")
        class_list = sorted({label for _, label in train})
        models[m] = train_reference_classifier(train, m, class_list, TrainConfig(), seed=cfg["seed"])
        test_samples[m] = class_samples(items, m, split="test")
    table = evaluate_classifier(models, test_samples)
    _emit(
        dict(overall=table.overall, per_class=table.per_class, mean_time_ms=table.mean_time_ms),
        as_json,
        table.to_text().splitlines(),
    )


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8800, type=int)
@click.option("--store", "store_path", default=":memory:")
@click.option("--log-dir", default=None, type=click.Path())
@click.option("--sink", "sink_path", default=None, type=click.Path(), help="results JSONL sink")
@click.option("--model", "model_path", default=None, type=click.Path(exists=True), help="binary patch model served by a local node")
@_config_opt
@_handle_errors
def cmd_serve(host, port, store_path, log_dir, sink_path, model_path, config_path):
    """Run the inspection service (HTTP API) with one local computing node."""
    import uvicorn

    from .service import Controller, ModelRegistry, SimulatedNode, Store
    from .service.app import create_app
    from .service.engine import make_pipeline_engine
    from .service.labeling import LabelingStore
    from .service.sink import FileSink, Publisher, SinkConfig

    cfg = _load_config(config_path)
    store = Store(store_path, log_dir)
    registry = ModelRegistry(store)
    publisher = None
    if sink_path:
        publisher = Publisher(FileSink(sink_path), store, SinkConfig())
    controller = Controller(store, registry, publisher)
    labeling = LabelingStore(store)
    controller.start()
    if model_path:
        from .service.registry import ModelDescriptor

        blob = Path(model_path).read_bytes()
        model = load_model(blob)
        descriptor = ModelDescriptor(
            model_id=model.model_id, version=model.version, product_id="default",
            layer_id="default", channel_mode=model.mode.value, artifact=str(model_path),
        )
        registry.register(descriptor)
        engine = make_pipeline_engine(
            ReferencePatchClassifier(model),
            config=PipelineConfig(theta_det=cfg["theta_det"], theta_ncc=cfg["theta_ncc"]),
        )
        node = SimulatedNode(controller, "node-local", engine, capacity=2)
        node.load_models({descriptor.key})
        node.start()
    uvicorn.run(create_app(controller, labeling), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
