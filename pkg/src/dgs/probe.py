"""Linear softmax probe over hand-crafted snippet statistics.

Demonstrates at desk scale that temporal-length classes are learnable from
snippets alone: motion extent grows with segment length for constant-velocity
content, and the feature vector exposes exactly that. Trained full-batch with
cross-entropy, so runs are deterministic.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from dgs.errors import DegenerateData, DimensionMismatch, EmptyInput
from dgs.motion import chroma_deviation
from dgs.pretext import DatasetManifest, PretextRecord
from dgs.snippets import DgsImage, load_dgs

FEATURE_NAMES = (
    "mean_chroma_deviation",
    "motion_fraction",
    "mean_abs_r_minus_b",
    "mean_abs_g_minus_rb_mid",
    "bbox_diagonal_ratio",
    "log1p_motion_pixels",
)
FEATURE_THRESHOLD = 8
EPSILON = 1e-12  # probability clamp inside the log


def extract_features(img: DgsImage) -> np.ndarray:
    """Fixed-order feature vector; zero-motion snippets map to all zeros."""
    dev = chroma_deviation(img)
    mask = dev >= FEATURE_THRESHOLD
    count = int(mask.sum())
    feats = np.zeros(len(FEATURE_NAMES), dtype=np.float64)
    feats[0] = float(dev.mean())
    feats[1] = count / dev.size
    if count:
        r = img.r.astype(np.float64)
        g = img.g.astype(np.float64)
        b = img.b.astype(np.float64)
        feats[2] = float(np.abs(r - b)[mask].mean())
        feats[3] = float(np.abs(g - (r + b) / 2.0)[mask].mean())
        rows, cols = np.nonzero(mask)
        dr = int(rows.max()) - int(rows.min()) + 1
        dc = int(cols.max()) - int(cols.min()) + 1
        feats[4] = math.hypot(dr, dc) / math.hypot(img.height, img.width)
    feats[5] = math.log1p(count)
    return feats


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, log-sum-exp stabilized."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(t: np.ndarray, p: np.ndarray) -> float:
    """L = -sum_i t_i ln(p_i), natural log, probabilities clamped at 1e-12."""
    t = np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if t.shape != p.shape:
        raise DimensionMismatch(f"label shape {t.shape} != probability shape {p.shape}")
    return float(-(t * np.log(np.clip(p, EPSILON, 1.0))).sum())


@dataclass
class SoftmaxModel:
    """Multinomial logistic model with per-feature normalization statistics."""

    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray     # (n_classes,)
    feat_mean: np.ndarray
    feat_std: np.ndarray
    class_labels: tuple[str, ...]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(x) - self.feat_mean) / self.feat_std

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.normalize(x) @ self.weights.T + self.bias)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)


def _one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    t = np.zeros((len(y), n_classes), dtype=np.float64)
    t[np.arange(len(y)), y] = 1.0
    return t


def mean_loss(model: SoftmaxModel, x: np.ndarray, y: np.ndarray) -> float:
    p = model.predict_proba(x)
    t = _one_hot(np.asarray(y), model.n_classes)
    return float(np.mean([cross_entropy(t[i], p[i]) for i in range(len(y))]))


def train_softmax(x_train: np.ndarray, y_train: np.ndarray, n_classes: int,
                  class_labels: Sequence[str], epochs: int = 500, lr: float = 0.1,
                  x_val: np.ndarray | None = None,
                  y_val: np.ndarray | None = None) -> tuple[SoftmaxModel, list[tuple[int, float, float]]]:
    """Full-batch gradient descent from zero initialization.

    Returns the model and a loss curve of (epoch, train_loss, val_loss) rows;
    epoch 0 is the pre-update loss. val_loss is NaN when no val data given.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train)
    present = set(int(c) for c in np.unique(y_train))
    missing = sorted(set(range(n_classes)) - present)
    if missing:
        raise DegenerateData(f"classes absent from training split: {missing}")
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    model = SoftmaxModel(
        weights=np.zeros((n_classes, x_train.shape[1])),
        bias=np.zeros(n_classes),
        feat_mean=mean,
        feat_std=std,
        class_labels=tuple(class_labels),
    )
    xn = model.normalize(x_train)
    t = _one_hot(y_train, n_classes)
    n = len(x_train)

    def losses() -> tuple[float, float]:
        tr = mean_loss(model, x_train, y_train)
        va = mean_loss(model, x_val, y_val) if x_val is not None and len(x_val) else float("nan")
        return tr, va

    curve = [(0, *losses())]
    for epoch in range(1, epochs + 1):
        p = softmax(xn @ model.weights.T + model.bias)
        grad_z = (p - t) / n
        model.weights -= lr * (grad_z.T @ xn)
        model.bias -= lr * grad_z.sum(axis=0)
        curve.append((epoch, *losses()))
    return model, curve


def features_for_records(records: Sequence[PretextRecord],
                         base_dir: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and label vector for manifest records."""
    base = Path(base_dir)
    x = np.empty((len(records), len(FEATURE_NAMES)), dtype=np.float64)
    y = np.empty(len(records), dtype=np.int64)
    for i, r in enumerate(records):
        x[i] = extract_features(load_dgs(base / r.path))
        y[i] = r.class_index
    return x, y


def train_probe(manifest: DatasetManifest, base_dir: str | Path,
                epochs: int = 500, lr: float = 0.1,
                seed: int = 0) -> tuple[SoftmaxModel, list[tuple[int, float, float]]]:
    """Train on the manifest's train split, tracking val loss per epoch.

    ``seed`` is accepted for interface symmetry; zero initialization plus a
    convex objective leaves nothing stochastic to seed.
    """
    del seed
    train = manifest.split_records("train")
    val = manifest.split_records("val")
    if not train:
        raise EmptyInput("manifest has no train records")
    x_train, y_train = features_for_records(train, base_dir)
    x_val, y_val = features_for_records(val, base_dir) if val else (None, None)
    return train_softmax(x_train, y_train, len(manifest.classes), manifest.classes,
                         epochs=epochs, lr=lr, x_val=x_val, y_val=y_val)


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows true class, cols predicted
    mean_loss: float
    n: int


def evaluate(model: SoftmaxModel, manifest: DatasetManifest, split: str,
             base_dir: str | Path) -> EvalResult:
    records = manifest.split_records(split)
    if not records:
        raise EmptyInput(f"no records in split {split!r}")
    if len(manifest.classes) != model.n_classes:
        raise DimensionMismatch(
            f"model has {model.n_classes} classes, manifest {len(manifest.classes)}"
        )
    x, y = features_for_records(records, base_dir)
    pred = model.predict(x)
    confusion = np.zeros((model.n_classes, model.n_classes), dtype=np.int64)
    for yi, pi in zip(y, pred):
        confusion[yi, pi] += 1
    return EvalResult(
        accuracy=float((pred == y).mean()),
        confusion=confusion,
        mean_loss=mean_loss(model, x, y),
        n=len(records),
    )


def save_model(model: SoftmaxModel, path: str | Path) -> None:
    """Text header plus row-major float weights, full precision."""
    def fmt(arr) -> str:
        return " ".join(repr(float(v)) for v in np.asarray(arr).ravel())

    lines = [
        "dgs-probe 1",
        "labels " + ",".join(model.class_labels),
        f"features {model.weights.shape[1]}",
        "mean " + fmt(model.feat_mean),
        "std " + fmt(model.feat_std),
        "bias " + fmt(model.bias),
    ]
    for row in model.weights:
        lines.append("w " + fmt(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> SoftmaxModel:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "dgs-probe 1":
        raise DimensionMismatch(f"{path} is not a probe model file")
    header = {}
    rows = []
    for line in lines[1:]:
        key, _, value = line.partition(" ")
        if key == "w":
            rows.append([float(v) for v in value.split()])
        else:
            header[key] = value
    labels = tuple(header["labels"].split(","))
    n_features = int(header["features"])
    weights = np.array(rows, dtype=np.float64)
    if weights.shape != (len(labels), n_features):
        raise DimensionMismatch(
            f"{path}: weight shape {weights.shape} != ({len(labels)}, {n_features})"
        )
    return SoftmaxModel(
        weights=weights,
        bias=np.array([float(v) for v in header["bias"].split()]),
        feat_mean=np.array([float(v) for v in header["mean"].split()]),
        feat_std=np.array([float(v) for v in header["std"].split()]),
        class_labels=labels,
    )


def curve_to_csv(curve: Sequence[tuple[int, float, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "train_loss", "val_loss"])
    for epoch, tr, va in curve:
        writer.writerow([epoch, repr(tr), repr(va)])
    return buf.getvalue()
