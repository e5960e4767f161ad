"""Binarized MLP on 20x20 MNIST, in ideal and analog (crossbar + neuron) mode.

Hidden units use the inverted activation sigmoid(-s * z), with z the dot
product of the binarized weights with the previous layer's activations and
s = gain/sqrt(fan_in), gain 6 by default. Training is softmax cross-entropy on the output layer's
``s * z`` using a straight-through estimator: the forward pass uses
sign(latent), gradients update the latent weights, which are clipped to
[-1, 1].

Because the output neurons also realise sigmoid(-s z), in analog mode the
predicted class is the output with the *lowest* voltage; it coincides with
the largest logit.
"""

from __future__ import annotations

import gzip
import json
import math
import os
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .crossbar import (Calibration, CrossbarLayer, ReadoutKind, ReadoutModel, column_voltages,
                       map_weights, mvm_ideal, raw_column_voltages, sense_resistance)
from .device import MtjParams
from .neuron import TransferCurve

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
PAPER_DIMS = (400, 120, 84, 10)


class MnistFormatError(ValueError):
    pass


class BadMagic(MnistFormatError):
    pass


class TruncatedFile(MnistFormatError):
    pass


class CountMismatch(MnistFormatError):
    pass


class CalibrationError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


class InferenceMode(Enum):
    IDEAL = "ideal"
    ANALOG = "analog"


# -- data -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray           # N x (h*w), float32 in [0, 1]
    labels: np.ndarray           # N, int64 in 0..9
    image_shape: tuple = (20, 20)

    def __post_init__(self):
        n = len(self.labels)
        if n == 0 or self.images.shape[0] != n:
            raise ValueError("dataset must be non-empty with one label per image")
        if self.images.shape[1] != self.image_shape[0] * self.image_shape[1]:
            raise ValueError("image size does not match image_shape")
        if self.images.min() < 0 or self.images.max() > 1:
            raise ValueError("pixels must lie in [0, 1]")
        if self.labels.min() < 0 or self.labels.max() > 9:
            raise ValueError("labels must lie in 0..9")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n], self.image_shape)


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path, magic: int) -> np.ndarray:
    """Parse an unsigned-byte IDX file (optionally gzipped)."""
    with _open(path) as fh:
        data = fh.read()
    if len(data) < 4:
        raise TruncatedFile(f"{path}: missing header")
    (found,) = struct.unpack(">i", data[:4])
    if found != magic:
        raise BadMagic(f"{path}: magic {found}, expected {magic}")
    ndim = data[3]
    header = 4 + 4 * ndim
    if len(data) < header:
        raise TruncatedFile(f"{path}: header cut short")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    count = int(np.prod(dims))
    if len(data) - header < count:
        raise TruncatedFile(f"{path}: expected {count} bytes of data, found {len(data) - header}")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_mnist_idx(image_path, label_path) -> Dataset:
    """Raw 28x28 MNIST with pixels scaled to [0, 1]."""
    images = read_idx(image_path, IMAGE_MAGIC)
    labels = read_idx(label_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    h, w = images.shape[1:]
    return Dataset((images.reshape(len(images), -1) / np.float32(255)).astype(np.float32),
                   labels.astype(np.int64), (h, w))


def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Rows of convex weights sampling ``n_in`` pixels at ``n_out`` half-pixel centres."""
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), i0] += 1 - frac
    m[np.arange(n_out), i1] += frac
    return m


def resize_to_20x20(image) -> np.ndarray:
    """Bilinear resize of one (H, W) image or a batch (N, H, W) to 20x20."""
    img = np.asarray(image, dtype=np.float64)
    a = _bilinear_matrix(img.shape[-2], 20)
    b = _bilinear_matrix(img.shape[-1], 20)
    out = a @ img @ b.T
    return np.clip(out, 0.0, 1.0)


def to_20x20(ds: Dataset) -> Dataset:
    if ds.image_shape == (20, 20):
        return ds
    imgs = ds.images.reshape(len(ds), *ds.image_shape)
    small = resize_to_20x20(imgs).reshape(len(ds), 400).astype(np.float32)
    return Dataset(small, ds.labels, (20, 20))


# -- model ----------------------------------------------------------------------

def binarize(w) -> np.ndarray:
    return np.where(np.asarray(w) >= 0, 1, -1).astype(np.int8)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(eq=False)
class MlpModel:
    dims: tuple
    latent: list                 # float32 matrices, fan_in x fan_out
    seed: int = 42
    epoch: int = 0
    activation_gain: float = 6.0

    @property
    def scales(self) -> list[float]:
        return [self.activation_gain / math.sqrt(d) for d in self.dims[:-1]]

    @property
    def binary(self) -> list[np.ndarray]:
        return [binarize(w) for w in self.latent]

    def binary_float(self) -> list[np.ndarray]:
        return [b.astype(np.float32) for b in self.binary]


def init_model(dims=PAPER_DIMS, seed: int = 42, init_scale: float = 0.1,
               activation_gain: float = 6.0) -> MlpModel:
    if len(dims) < 2:
        raise ValueError("need at least an input and an output layer")
    rng = np.random.default_rng(seed)
    latent = [rng.uniform(-init_scale, init_scale, size=(a, b)).astype(np.float32)
              for a, b in zip(dims[:-1], dims[1:])]
    return MlpModel(tuple(int(d) for d in dims), latent, seed, 0, activation_gain)


def forward(weights, x, scales):
    """Activations of every layer; the last entry is the logit vector s * z."""
    acts = [x]
    h = x
    for k, (w, s) in enumerate(zip(weights, scales)):
        z = h @ w
        if k == len(weights) - 1:
            h = s * z
        else:
            h = sigmoid(-s * z)
        acts.append(h)
    return acts


def loss_and_grads(weights, x, labels, scales):
    """Mean softmax cross-entropy and its gradient w.r.t. each weight matrix."""
    acts = forward(weights, x, scales)
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    delta = np.exp(logp)
    delta[np.arange(n), labels] -= 1
    delta /= n
    grads = [None] * len(weights)
    g = delta * scales[-1]
    for k in range(len(weights) - 1, -1, -1):
        grads[k] = acts[k].T @ g
        if k:
            a = acts[k]
            g = (g @ weights[k].T) * (-scales[k - 1] * a * (1 - a))
    return float(loss), grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 64
    seed: int = 42
    init_scale: float = 0.1
    activation_gain: float = 6.0


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float | None = None


def train(model: MlpModel, data: Dataset, config: TrainConfig = TrainConfig(),
          test: Dataset | None = None, progress=None):
    """Straight-through training of the binarized weights, in place.

    Returns ``(model, metrics)``. ``metrics[0]`` describes the untrained
    model (epoch 0); one entry follows per epoch. The batch order depends only
    on ``config.seed``.
    """
    rng = np.random.default_rng(config.seed)
    velocity = [np.zeros_like(w) for w in model.latent]
    x_all = data.images.astype(np.float32)
    metrics = [_epoch_metrics(model, data, test, 0)]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(data))
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(model.binary_float(), x_all[idx], data.labels[idx],
                                         model.scales)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} in epoch {epoch} at batch {start}")
            for w, v, g in zip(model.latent, velocity, grads):
                v *= config.momentum
                v -= config.lr * g.astype(np.float32)
                w += v
                np.clip(w, -1.0, 1.0, out=w)
        model.epoch = epoch
        m = _epoch_metrics(model, data, test, epoch)
        if not math.isfinite(m.train_loss):
            raise TrainingDiverged(f"loss became {m.train_loss} after epoch {epoch}")
        metrics.append(m)
        if progress:
            progress(m)
    return model, metrics


def _epoch_metrics(model, data, test, epoch) -> EpochMetrics:
    loss, _ = loss_and_grads(model.binary_float(), data.images, data.labels, model.scales)
    acc = float(np.mean(ideal_predict(model, data.images) == data.labels))
    test_acc = float(np.mean(ideal_predict(model, test.images) == test.labels)) if test else None
    return EpochMetrics(epoch, loss, acc, test_acc)


# -- inference ------------------------------------------------------------------

def ideal_predict(model: MlpModel, x) -> np.ndarray:
    logits = forward(model.binary_float(), np.atleast_2d(np.asarray(x, np.float32)), model.scales)[-1]
    return np.argmax(logits, axis=1)


@dataclass(frozen=True, eq=False)
class AnalogPipeline:
    """Calibrated crossbar layers driving neurons that follow ``curve``."""

    curve: TransferCurve
    layers: tuple
    window: tuple[float, float]

    @property
    def rails(self):
        return self.curve.config.rails

    def run(self, x, trace: bool = False):
        rails = self.rails
        v = rails.vss + (rails.vdd - rails.vss) * np.asarray(x, dtype=float)
        traces = [v]
        for layer in self.layers:
            v = self.curve.interpolate(column_voltages(layer, v))
            traces.append(v)
        return traces if trace else v


def fit_affine(x, t) -> tuple[float, float]:
    """Least-squares (gain, offset) minimising sum((gain*x + offset - t)^2)."""
    x = np.ravel(np.asarray(x, dtype=float))
    t = np.ravel(np.asarray(t, dtype=float))
    if x.size < 2 or np.ptp(x) <= 1e-15 * max(1.0, np.abs(x).max()):
        raise CalibrationError("calibration samples have no spread")
    a = np.column_stack([x, np.ones_like(x)])
    (gain, offset), *_ = np.linalg.lstsq(a, t, rcond=None)
    return float(gain), float(offset)


def active_window(curve: TransferCurve, boundaries) -> tuple[float, float]:
    """Input span from entering region II to leaving region IV."""
    return float(boundaries[0]), float(boundaries[3])


def window_dot_range(curve: TransferCurve, window: tuple[float, float], scale: float):
    """Dot products at which the ideal activation sigmoid(-scale * d) reaches the
    curve's output levels at the two window edges."""
    rails = curve.config.rails
    y = (curve.interpolate(np.asarray(window, dtype=float)) - rails.vss) / (rails.vdd - rails.vss)
    if not (0 < y[1] < y[0] < 1):
        raise CalibrationError(f"window output levels {y.tolist()} are not inside the rails")
    return tuple(float(u) for u in -np.log(y / (1 - y)) / scale)


def calibrate_layer(layer: CrossbarLayer, curve: TransferCurve, sample_inputs,
                    window: tuple[float, float], scale: float) -> Calibration:
    """Affine map from the raw column read-out into the neuron's input window.

    Each sample's ideal dot product is placed in the window by the affine map
    that sends ``window_dot_range`` onto ``window``, so the window edges
    produce the same activation levels as the ideal sigmoid while the curve's
    shape in between is left as is. The read-out is then least-squares fit to
    those targets.
    """
    rails = curve.config.rails
    v = np.atleast_2d(np.asarray(sample_inputs, dtype=float))
    dots = mvm_ideal(layer.weights.astype(float), (v - rails.vss) / (rails.vdd - rails.vss))
    d_lo, d_hi = window_dot_range(curve, window, scale)
    targets = window[0] + (dots - d_lo) / (d_hi - d_lo) * (window[1] - window[0])
    return Calibration(*fit_affine(raw_column_voltages(layer, v), targets))


def build_analog_pipeline(model: MlpModel, curve: TransferCurve, boundaries, device: MtjParams,
                          calib_images, readout: ReadoutKind = ReadoutKind.DIFFERENTIAL_SENSE
                          ) -> AnalogPipeline:
    """Map the binarized weights onto crossbars and calibrate them layer by layer.

    Later layers are calibrated on the analog outputs of the earlier ones.
    """
    rails = curve.config.rails
    window = active_window(curve, boundaries)
    v = rails.vss + (rails.vdd - rails.vss) * np.asarray(calib_images, dtype=float)
    layers = []
    for w, s in zip(model.binary, model.scales):
        if readout is ReadoutKind.DIFFERENTIAL_SENSE:
            ro = ReadoutModel(readout, sense_resistance(w.shape[0], device, window[1] - window[0],
                                                        rails), rails=rails)
        else:
            ro = ReadoutModel(readout, rails=rails)
        layer = map_weights(w, device, ro)
        layer = layer.with_calibration(calibrate_layer(layer, curve, v, window, s))
        layers.append(layer)
        v = curve.interpolate(column_voltages(layer, v))
    return AnalogPipeline(curve, tuple(layers), window)


def infer(model: MlpModel, image, mode: InferenceMode = InferenceMode.IDEAL,
          pipeline: AnalogPipeline | None = None, trace: bool = False):
    """Class for one flattened image (or a batch); with ``trace`` also per-layer values."""
    x = np.atleast_2d(np.asarray(image, dtype=np.float32))
    if mode is InferenceMode.IDEAL:
        acts = forward(model.binary_float(), x, model.scales)
        pred = np.argmax(acts[-1], axis=1)
    else:
        if pipeline is None:
            raise ValueError("analog inference needs a calibrated pipeline")
        acts = pipeline.run(x, trace=True)
        pred = np.argmin(acts[-1], axis=1)
    pred = pred if np.ndim(image) > 1 else int(pred[0])
    return (pred, acts) if trace else pred


@dataclass(frozen=True, eq=False)
class EvalResult:
    accuracy: float
    confusion: np.ndarray        # true class x predicted class

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "confusion_matrix": self.confusion.tolist()}


def evaluate(model: MlpModel, data: Dataset, mode: InferenceMode = InferenceMode.IDEAL,
             pipeline: AnalogPipeline | None = None, batch: int = 2000) -> EvalResult:
    preds = np.concatenate([infer(model, data.images[i:i + batch], mode, pipeline)
                            for i in range(0, len(data), batch)])
    conf = np.zeros((10, 10), dtype=np.int64)
    np.add.at(conf, (data.labels, preds), 1)
    return EvalResult(float(np.mean(preds == data.labels)), conf)


# -- storage --------------------------------------------------------------------

def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_model(model: MlpModel, path, extra: dict | None = None) -> Path:
    """Write ``<path>`` (JSON manifest) plus ``.latent.f32`` and ``.binary.i8`` blobs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    latent = b"".join(w.astype("<f4").tobytes(order="C") for w in model.latent)
    binary = b"".join(b.astype("<i1").tobytes(order="C") for b in model.binary)
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    lat_name, bin_name = f"{stem}.latent.f32", f"{stem}.binary.i8"
    _atomic_write(path.with_name(lat_name), latent)
    _atomic_write(path.with_name(bin_name), binary)
    manifest = {"schema": 1, "dims": list(model.dims), "seed": model.seed, "epoch": model.epoch,
                "activation_gain": model.activation_gain,
                "mode": "binarized", "latent_file": lat_name, "binary_file": bin_name}
    manifest.update(extra or {})
    _atomic_write(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return path


def load_model(path) -> MlpModel:
    path = Path(path)
    meta = json.loads(path.read_text())
    dims = tuple(meta["dims"])
    raw = np.frombuffer(path.with_name(meta["latent_file"]).read_bytes(), dtype="<f4")
    sizes = [a * b for a, b in zip(dims[:-1], dims[1:])]
    if raw.size != sum(sizes):
        raise ValueError(f"{meta['latent_file']}: expected {sum(sizes)} weights, found {raw.size}")
    latent, start = [], 0
    for (a, b), n in zip(zip(dims[:-1], dims[1:]), sizes):
        latent.append(raw[start:start + n].reshape(a, b).astype(np.float32))
        start += n
    return MlpModel(dims, latent, int(meta.get("seed", 42)), int(meta.get("epoch", 0)),
                    float(meta.get("activation_gain", 6.0)))


def train_config_from(block=None, seed: int = 42) -> TrainConfig:
    block = dict(block or {})
    allowed = {f for f in TrainConfig.__dataclass_fields__} | {"dims"}
    unknown = set(block) - allowed
    if unknown:
        raise KeyError(f"unknown mlp keys: {sorted(unknown)}")
    fields_ = {k: v for k, v in block.items() if k != "dims"}
    fields_.setdefault("seed", seed)
    return TrainConfig(**fields_)
