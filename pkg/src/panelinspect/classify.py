"""Background-aware defect classification.

Channel stacks (RGB / RGB+G / RGB+S / RGB^2) feed a pluggable classifier; the
reference implementation is multinomial logistic regression over pooled-grid
and histogram features, trained by plain gradient descent.
"""
from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ErrorCode, InspectionError
from .selfref import BackgroundMatch, BinaryMask
from .types import InspectionImage, PatchBox

MODEL_MAGIC = b"PINSPECT1\n"


class ChannelMode(str, Enum):
    RGB = "RGB"
    RGB_G = "RGB_G"
    RGB_S = "RGB_S"
    RGB2 = "RGB2"

    def channels(self) -> int:
        return {"RGB": 3, "RGB_G": 4, "RGB_S": 4, "RGB2": 6}[self.value]


@dataclass
class ChannelStack:
    data: np.ndarray  # H x W x K floats in [0, 1]
    mode: ChannelMode

    def __post_init__(self):
        if self.data.shape[2] != self.mode.channels():
            raise InspectionError(
                ErrorCode.SPEC_INVALID,
                f"{self.mode.value} needs {self.mode.channels()} channels, got {self.data.shape[2]}",
            )


def _bilinear_224(plane: np.ndarray) -> np.ndarray:
    """448 -> 224 bilinear downscale (2x2 box average is exact bilinear here)."""
    if plane.shape[0] == 224 and plane.shape[1] == 224:
        return plane
    return plane.reshape(224, plane.shape[0] // 224, 224, plane.shape[1] // 224).mean(axis=(1, 3))


def _rgb_planes(pixels: np.ndarray, box: PatchBox) -> np.ndarray:
    patch = box.crop(pixels).astype(np.float64)
    if patch.ndim == 2:
        patch = np.repeat(patch[:, :, None], 3, axis=2)
    return np.stack([_bilinear_224(patch[:, :, c]) for c in range(3)], axis=2) / 255.0


def build_channel_stack(
    image: InspectionImage,
    defect_box: PatchBox,
    background: BackgroundMatch | None,
    mask: BinaryMask | None,
    mode: ChannelMode,
) -> ChannelStack:
    """Assemble the classifier input for one defect patch."""
    planes = [_rgb_planes(image.pixels, defect_box)]
    if mode in (ChannelMode.RGB_G, ChannelMode.RGB2):
        if background is None:
            raise InspectionError(ErrorCode.MISSING_BACKGROUND, mode.value)
        bg_rgb = _rgb_planes(image.pixels, background.box)
        if mode is ChannelMode.RGB_G:
            gray = bg_rgb @ np.array([0.299, 0.587, 0.114])
            planes.append(gray[:, :, None])
        else:
            planes.append(bg_rgb)
    elif mode is ChannelMode.RGB_S:
        if mask is None:
            raise InspectionError(ErrorCode.MISSING_MASK, mode.value)
        bits = _bilinear_224(mask.bits.astype(np.float64))
        planes.append((bits >= 0.5).astype(np.float64)[:, :, None])
    return ChannelStack(data=np.concatenate(planes, axis=2), mode=mode)


def patch_rgb_stack(patch_pixels: np.ndarray) -> ChannelStack:
    """RGB ChannelStack from a raw 224/448 patch crop (gray crops replicate)."""
    patch = np.asarray(patch_pixels, dtype=np.float64)
    if patch.ndim == 2:
        patch = np.repeat(patch[:, :, None], 3, axis=2)
    planes = np.stack([_bilinear_224(patch[:, :, c]) for c in range(3)], axis=2) / 255.0
    return ChannelStack(data=planes, mode=ChannelMode.RGB)


class ReferencePatchClassifier:
    """Binary patch scorer backed by a two-class logistic model."""

    def __init__(self, model: "LogisticModel"):
        if "defect" not in model.class_list:
            raise InspectionError(ErrorCode.SPEC_INVALID, "binary model needs a 'defect' class")
        self.model = model

    def score(self, patch: np.ndarray) -> float:
        scores = self.model.predict(patch_rgb_stack(patch))
        return scores["defect"]


# --- features -----------------------------------------------------------------

POOL_GRID = 8
HIST_BINS = 16
FEATURE_SPEC = f"pool{POOL_GRID}x{POOL_GRID}+hist{HIST_BINS}"


def stack_features(stack: ChannelStack) -> np.ndarray:
    """Per-channel 8x8 mean-pool grid plus a 16-bin intensity histogram."""
    data = stack.data
    h, w, k = data.shape
    cell_h, cell_w = h // POOL_GRID, w // POOL_GRID
    pooled = data[: cell_h * POOL_GRID, : cell_w * POOL_GRID].reshape(
        POOL_GRID, cell_h, POOL_GRID, cell_w, k
    ).mean(axis=(1, 3))
    feats = [pooled.reshape(-1, k).T.ravel()]
    for c in range(k):
        hist, _ = np.histogram(data[:, :, c], bins=HIST_BINS, range=(0.0, 1.0 + 1e-9))
        feats.append(hist / (h * w))
    return np.concatenate(feats)


# --- multinomial logistic regression ------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2.0
    max_epochs: int = 100
    grad_tol: float = 1e-5
    l2: float = 0.0
    # Backtracking halves the rate on a loss increase; successful epochs grow
    # it back so one early plateau does not starve the remaining epochs.
    lr_growth: float = 1.1
    # Eigenvalue floor for the internal whitening transform (see train_logistic).
    whiten_eps: float = 1e-5


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _loss_grad(weights, features, onehot, l2):
    """Mean cross-entropy and its analytic gradient; features carry a bias column."""
    probs = _softmax(features @ weights)
    n = features.shape[0]
    loss = -np.mean(np.log(np.clip((probs * onehot).sum(axis=1), 1e-300, None)))
    loss += 0.5 * l2 * float((weights * weights).sum())
    grad = features.T @ (probs - onehot) / n + l2 * weights
    return loss, grad


def _with_bias(features: np.ndarray) -> np.ndarray:
    return np.hstack([features, np.ones((features.shape[0], 1))])


@dataclass
class LogisticModel:
    """Immutable after training; safe for concurrent predict calls."""

    weights: np.ndarray  # (n_features + 1) x n_classes
    class_list: list[str]
    mode: ChannelMode
    model_id: str = "reference-logistic"
    version: str = "1"
    feature_spec: str = FEATURE_SPEC
    train_history: list[float] = field(default_factory=list)

    def predict_features(self, features: np.ndarray) -> np.ndarray:
        probs = _softmax(_with_bias(np.atleast_2d(features)) @ self.weights)
        return probs[0] if features.ndim == 1 else probs

    def predict(self, stack: ChannelStack) -> dict[str, float]:
        if stack.mode is not self.mode:
            raise InspectionError(ErrorCode.SPEC_INVALID, f"model expects {self.mode.value}")
        probs = self.predict_features(stack_features(stack))
        return dict(zip(self.class_list, probs.tolist()))


def train_logistic(
    features: np.ndarray,
    labels: list[str],
    class_list: list[str],
    mode: ChannelMode,
    config: TrainConfig = TrainConfig(),
    seed: int = 0,
) -> LogisticModel:
    """Deterministic full-batch gradient descent with halving on loss increase."""
    del seed  # zero init keeps training fully deterministic; kept for API stability
    counts = {c: labels.count(c) for c in class_list}
    for cls, cnt in counts.items():
        if cnt < 10:
            raise InspectionError(ErrorCode.INSUFFICIENT_DATA, f"class {cls} has {cnt} < 10 samples")
    raw = np.asarray(features, dtype=np.float64)
    # Precondition: run the descent on whitened features (raw scales span
    # several orders of magnitude between pool means and histogram tails, and
    # neighbouring pool cells are strongly correlated, which cripples plain
    # gradient descent) and fold the affine transform back into the returned
    # weights afterwards — the stored model stays in raw feature space.
    mu = raw.mean(axis=0)
    centered = raw - mu
    cov = centered.T @ centered / len(raw)
    evals, evecs = np.linalg.eigh(cov)
    whiten = evecs @ np.diag(1.0 / np.sqrt(evals + config.whiten_eps)) @ evecs.T
    x = _with_bias(centered @ whiten)
    index = {c: i for i, c in enumerate(class_list)}
    onehot = np.zeros((x.shape[0], len(class_list)))
    onehot[np.arange(x.shape[0]), [index[l] for l in labels]] = 1.0
    weights = np.zeros((x.shape[1], len(class_list)))
    lr = config.learning_rate
    loss, grad = _loss_grad(weights, x, onehot, config.l2)
    history = [loss]
    for _ in range(config.max_epochs):
        if np.linalg.norm(grad) < config.grad_tol:
            break
        step = weights - lr * grad
        new_loss, new_grad = _loss_grad(step, x, onehot, config.l2)
        while new_loss > loss and lr > 1e-8:
            lr *= 0.5
            step = weights - lr * grad
            new_loss, new_grad = _loss_grad(step, x, onehot, config.l2)
        weights, loss, grad = step, new_loss, new_grad
        history.append(loss)
        # Accepted steps may grow the rate back; the backtracking line keeps
        # the recorded loss history non-increasing regardless.
        lr *= config.lr_growth
    unscaled = np.empty_like(weights)
    unscaled[:-1] = whiten @ weights[:-1]
    unscaled[-1] = weights[-1] - mu @ unscaled[:-1]
    return LogisticModel(weights=unscaled, class_list=list(class_list), mode=mode, train_history=history)


def gradient_check(
    features: np.ndarray, labels: list[str], class_list: list[str], h: float = 1e-5, seed: int = 0
) -> float:
    """Max relative error between the analytic gradient and central differences."""
    x = _with_bias(np.asarray(features, dtype=np.float64))
    index = {c: i for i, c in enumerate(class_list)}
    onehot = np.zeros((x.shape[0], len(class_list)))
    onehot[np.arange(x.shape[0]), [index[l] for l in labels]] = 1.0
    rng = np.random.default_rng(seed)
    weights = rng.normal(0, 0.1, (x.shape[1], len(class_list)))
    _, grad = _loss_grad(weights, x, onehot, 0.0)
    worst = 0.0
    flat = weights.ravel()
    for idx in rng.choice(flat.size, size=min(200, flat.size), replace=False):
        orig = flat[idx]
        flat[idx] = orig + h
        lp, _ = _loss_grad(weights, x, onehot, 0.0)
        flat[idx] = orig - h
        lm, _ = _loss_grad(weights, x, onehot, 0.0)
        flat[idx] = orig
        numeric = (lp - lm) / (2 * h)
        analytic = grad.ravel()[idx]
        scale = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst


# --- model artifact -----------------------------------------------------------


def save_model(model: LogisticModel) -> bytes:
    """Versioned binary blob: magic, JSON metadata, raw float64 weights."""
    meta = dict(
        model_id=model.model_id,
        version=model.version,
        mode=model.mode.value,
        class_list=model.class_list,
        feature_spec=model.feature_spec,
        shape=list(model.weights.shape),
    )
    header = json.dumps(meta, sort_keys=True).encode()
    out = io.BytesIO()
    out.write(MODEL_MAGIC)
    out.write(len(header).to_bytes(4, "big"))
    out.write(header)
    out.write(np.ascontiguousarray(model.weights, dtype=np.float64).tobytes())
    return out.getvalue()


def load_model(blob: bytes) -> LogisticModel:
    if not blob.startswith(MODEL_MAGIC):
        raise InspectionError(ErrorCode.SPEC_INVALID, "bad model artifact magic")
    offset = len(MODEL_MAGIC)
    hlen = int.from_bytes(blob[offset : offset + 4], "big")
    meta = json.loads(blob[offset + 4 : offset + 4 + hlen])
    weights = np.frombuffer(blob[offset + 4 + hlen :], dtype=np.float64).reshape(meta["shape"]).copy()
    return LogisticModel(
        weights=weights,
        class_list=meta["class_list"],
        mode=ChannelMode(meta["mode"]),
        model_id=meta["model_id"],
        version=meta["version"],
        feature_spec=meta["feature_spec"],
    )


# --- training from stacks and evaluation --------------------------------------


def train_reference_classifier(
    samples: list[tuple[ChannelStack, str]],
    mode: ChannelMode,
    class_list: list[str],
    config: TrainConfig = TrainConfig(),
    seed: int = 0,
) -> LogisticModel:
    features = np.stack([stack_features(stack) for stack, _ in samples])
    labels = [label for _, label in samples]
    return train_logistic(features, labels, class_list, mode, config, seed)


@dataclass
class EvaluationTable:
    class_list: list[str]
    per_class: dict[str, dict[str, float]]  # mode -> class -> accuracy %
    overall: dict[str, float]  # mode -> accuracy %
    mean_time_ms: dict[str, float]  # mode -> per-sample inference ms

    def to_text(self) -> str:
        modes = list(self.overall)
        lines = ["type\t" + "\t".join(modes)]
        for cls in self.class_list:
            lines.append(cls + "\t" + "\t".join(f"{self.per_class[m].get(cls, float('nan')):.2f}" for m in modes))
        lines.append("accuracy\t" + "\t".join(f"{self.overall[m]:.2f}" for m in modes))
        lines.append("time (ms)\t" + "\t".join(f"{self.mean_time_ms[m]:.2f}" for m in modes))
        return "\n".join(lines)


def evaluate_classifier(
    models: dict[ChannelMode, LogisticModel],
    test_samples: dict[ChannelMode, list[tuple[ChannelStack, str]]],
    extra_time_ms: dict[ChannelMode, float] | None = None,
) -> EvaluationTable:
    """Per-class accuracy table, one column set per channel mode."""
    per_class: dict[str, dict[str, float]] = {}
    overall: dict[str, float] = {}
    times: dict[str, float] = {}
    class_list: list[str] = []
    for mode, model in models.items():
        samples = test_samples[mode]
        if not samples:
            raise InspectionError(ErrorCode.EMPTY_SPLIT, mode.value)
        class_list = model.class_list
        correct: dict[str, int] = {c: 0 for c in model.class_list}
        total: dict[str, int] = {c: 0 for c in model.class_list}
        t0 = time.perf_counter()
        for stack, label in samples:
            scores = model.predict(stack)
            pred = max(scores, key=scores.get)
            total[label] += 1
            correct[label] += pred == label
        elapsed_ms = (time.perf_counter() - t0) * 1000.0 / len(samples)
        if extra_time_ms:
            elapsed_ms += extra_time_ms.get(mode, 0.0)
        per_class[mode.value] = {
            c: 100.0 * correct[c] / total[c] for c in model.class_list if total[c]
        }
        seen = sum(total.values())
        overall[mode.value] = 100.0 * sum(correct.values()) / seen
        times[mode.value] = elapsed_ms
    return EvaluationTable(class_list=class_list, per_class=per_class, overall=overall, mean_time_ms=times)
