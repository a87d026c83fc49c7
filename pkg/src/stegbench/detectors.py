"""Desk-scale steganalyzers and confusion-matrix evaluation.

Two interchangeable detectors: a logistic classifier over truncated
co-occurrence features of the KV high-pass residual, and a tiny strided CNN
on the raw residual. Both consume cover/stego pairs, emit P(stego), and are
scored with the usual four-cell confusion matrix.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .media import Image8
from .nnet import (
    AdamState,
    BatchNorm,
    Conv2d,
    Dense,
    GlobalAvgPool,
    Network,
    ReLU,
    Softmax,
    TrainConfig,
    adam_step,
    cross_entropy,
    load_checkpoint,
    save_checkpoint,
)
from .rng import derive_seed, generator

# integer taps, scaled once at the end: the zero sum is then exact and the
# residual of a constant image is exactly zero
KV_TAPS = np.array(
    [
        [-1, 2, -2, 2, -1],
        [2, -6, 8, -6, 2],
        [-2, 8, -12, 8, -2],
        [2, -6, 8, -6, 2],
        [-1, 2, -2, 2, -1],
    ],
    dtype=np.int64,
)
KV_SCALE = 12.0

FEATURE_T = 3
FEATURE_Q = 1.0

DETECTOR_KINDS = ("residual_features", "tiny_cnn")


def kv_residual(img: Image8) -> np.ndarray:
    """High-pass residual: KV kernel over the mirror-extended plane, same size."""
    if img.width < 5 or img.height < 5:
        raise ValueError(f"image {img.width}x{img.height} too small for the 5x5 kernel")
    padded = np.pad(img.pixels.astype(np.int64), 2, mode="reflect")
    counts = signal.correlate2d(padded, KV_TAPS, mode="valid")
    return counts / KV_SCALE


def extract_features(residual: np.ndarray, t: int = FEATURE_T, q: float = FEATURE_Q) -> np.ndarray:
    """Truncated-quantized co-occurrence histograms, horizontal then vertical."""
    if t < 1 or not q > 0:
        raise ValueError(f"need T >= 1 and q > 0, got T={t} q={q}")
    bins = 2 * t + 1
    quant = np.clip(np.rint(residual / q), -t, t).astype(np.int64) + t

    def pair_hist(a, b):
        counts = np.bincount((a * bins + b).ravel(), minlength=bins * bins)
        return counts / counts.sum()

    horizontal = pair_hist(quant[:, :-1], quant[:, 1:])
    vertical = pair_hist(quant[:-1, :], quant[1:, :])
    return np.concatenate([horizontal, vertical])


def image_features(img: Image8) -> np.ndarray:
    return extract_features(kv_residual(img))


@dataclass
class DetectorModel:
    kind: str
    net: Network
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    trained: bool = False


def _feature_net(seed: int) -> Network:
    # two-class softmax over a single affine map: logistic regression
    return Network([Dense(2), Softmax()], seed=seed)


def _tiny_cnn(seed: int) -> Network:
    return Network(
        [
            Conv2d(8, 3, stride=2),
            BatchNorm(),
            ReLU(),
            Conv2d(8, 3, stride=2),
            BatchNorm(),
            ReLU(),
            GlobalAvgPool(),
            Dense(2),
            Softmax(),
        ],
        seed=seed,
    )


def _detector_inputs(model_kind: str, images: list[Image8], mean=None, std=None) -> np.ndarray:
    if model_kind == "residual_features":
        x = np.stack([image_features(img) for img in images])
        if mean is not None:
            x = (x - mean) / std
        return x
    return np.stack([kv_residual(img) for img in images])[:, None, :, :]


def train_detector(pairs, kind: str, config: TrainConfig) -> DetectorModel:
    """Fit a detector on balanced cover/stego pairs with AdaM + cross-entropy."""
    if kind not in DETECTOR_KINDS:
        raise ValueError(f"unknown detector kind {kind!r}")
    if len(pairs) < 2:
        raise ValueError(f"need at least 2 cover/stego pairs, got {len(pairs)}")
    images = [img for pair in pairs for img in pair]
    labels = np.array([lab for _ in pairs for lab in (0, 1)])

    mean = std = None
    if kind == "residual_features":
        raw = np.stack([image_features(img) for img in images])
        mean = raw.mean(axis=0)
        std = np.maximum(raw.std(axis=0), 1e-12)
        inputs = (raw - mean) / std
        net = _feature_net(derive_seed(config.seed, "detector", kind))
    else:
        inputs = _detector_inputs(kind, images)
        net = _tiny_cnn(derive_seed(config.seed, "detector", kind))

    n = len(images)
    state = None
    step = 0
    for epoch in range(config.epochs):
        order = generator(derive_seed(config.seed, "order", epoch)).permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            probs = net.forward(inputs[batch], train=True, step=step)
            _, grad = cross_entropy(probs, labels[batch])
            net.backward(grad)
            if state is None:
                state = AdamState.for_params(net.params)
            step += 1
            adam_step(net.params, net.grads, state, config, step, epoch)
    return DetectorModel(kind, net, mean, std, trained=True)


def predict(m: DetectorModel, img: Image8) -> float:
    """P(stego) for one image."""
    if not m.trained:
        raise ValueError("detector has not been trained")
    x = _detector_inputs(m.kind, [img], m.feature_mean, m.feature_std)
    return float(m.net.forward(x, train=False)[0, 1])


def predict_batch(m: DetectorModel, images: list[Image8]) -> np.ndarray:
    if not m.trained:
        raise ValueError("detector has not been trained")
    if not images:
        return np.zeros(0)
    x = _detector_inputs(m.kind, images, m.feature_mean, m.feature_std)
    return m.net.forward(x, train=False)[:, 1]


@dataclass(frozen=True)
class ConfusionMatrix:
    cover_as_cover: int
    cover_as_stego: int
    stego_as_cover: int
    stego_as_stego: int

    def __post_init__(self):
        if min(self.cells) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def cells(self) -> tuple[int, int, int, int]:
        return (
            self.cover_as_cover,
            self.cover_as_stego,
            self.stego_as_cover,
            self.stego_as_stego,
        )

    @property
    def total(self) -> int:
        return sum(self.cells)

    def percentages(self) -> tuple[float, float, float, float]:
        if self.total == 0:
            raise ValueError("empty confusion matrix")
        return tuple(100.0 * c / self.total for c in self.cells)


def error_rate(cm: ConfusionMatrix) -> float:
    """Fraction misclassified: false positives plus missed stegos."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    return (cm.cover_as_stego + cm.stego_as_cover) / cm.total


def evaluate(m: DetectorModel, pairs) -> ConfusionMatrix:
    """Classify every cover and stego at the 0.5 threshold."""
    covers = [c for c, _ in pairs]
    stegos = [s for _, s in pairs]
    cover_p = predict_batch(m, covers)
    stego_p = predict_batch(m, stegos)
    cover_hits = int(np.count_nonzero(cover_p < 0.5))
    stego_hits = int(np.count_nonzero(stego_p >= 0.5))
    return ConfusionMatrix(
        cover_as_cover=cover_hits,
        cover_as_stego=len(covers) - cover_hits,
        stego_as_cover=len(stegos) - stego_hits,
        stego_as_stego=stego_hits,
    )


CONFUSION_HEADER = "cover_as_cover,cover_as_stego,stego_as_cover,stego_as_stego,error_rate"


def confusion_to_csv(cm: ConfusionMatrix) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CONFUSION_HEADER.split(","))
    writer.writerow([*cm.cells, f"{error_rate(cm):.6f}"])
    return out.getvalue()


def confusion_from_csv(text: str) -> ConfusionMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CONFUSION_HEADER.split(","):
        raise ValueError("bad confusion CSV header")
    c = [int(v) for v in rows[1][:4]]
    return ConfusionMatrix(*c)


def save_detector(m: DetectorModel) -> bytes:
    if not m.trained:
        raise ValueError("refusing to checkpoint an untrained detector")
    meta = {"detector_kind": m.kind, "T": FEATURE_T, "q": FEATURE_Q}
    if m.feature_mean is not None:
        meta["feature_mean"] = m.feature_mean.tolist()
        meta["feature_std"] = m.feature_std.tolist()
    return save_checkpoint(m.net, meta)


def load_detector(data: bytes) -> DetectorModel:
    net, meta = load_checkpoint(data)
    kind = meta.get("detector_kind")
    if kind not in DETECTOR_KINDS:
        raise ValueError(f"checkpoint is not a detector (kind={kind!r})")
    mean = np.asarray(meta["feature_mean"]) if "feature_mean" in meta else None
    std = np.asarray(meta["feature_std"]) if "feature_std" in meta else None
    return DetectorModel(kind, net, mean, std, trained=True)
