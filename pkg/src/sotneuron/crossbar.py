"""Binarized SOT-MRAM crossbar.

Each +/-1 weight occupies a differential pair of MTJs: +1 puts the low
(parallel) conductance on the positive column line and the high-resistance
(antiparallel) device on the negative line, -1 swaps them. Weight matrices
are laid out rows = inputs, cols = outputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .device import MagState, MtjParams, mtj_resistance
from .fet import Rails


class ReadoutKind(Enum):
    NORMALIZED_DIVIDER = "normalized-divider"
    DIFFERENTIAL_SENSE = "differential-sense"


@dataclass(frozen=True)
class Calibration:
    gain: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.gain) and np.isfinite(self.offset)):
            raise ValueError("calibration must be finite")

    def apply(self, v):
        return self.gain * v + self.offset


@dataclass(frozen=True)
class ReadoutModel:
    """Column read-out.

    ``NORMALIZED_DIVIDER``: the positive line ends on an ideal
    high-impedance node, v = sum(G v) / sum(G).
    ``DIFFERENTIAL_SENSE``: both lines are held at virtual ground and the
    difference current is converted through ``r_sense``, then clamped to
    the rails.
    """

    kind: ReadoutKind = ReadoutKind.DIFFERENTIAL_SENSE
    r_sense: float | None = None
    calibration: Calibration = field(default_factory=Calibration)
    rails: Rails = field(default_factory=Rails)

    def __post_init__(self):
        if self.kind is ReadoutKind.DIFFERENTIAL_SENSE:
            if self.r_sense is None or not self.r_sense > 0:
                raise ValueError("differential sense needs a positive r_sense")


@dataclass(frozen=True, eq=False)
class CrossbarLayer:
    weights: np.ndarray          # int8, rows x cols
    device: MtjParams
    g_pos: np.ndarray
    g_neg: np.ndarray
    readout: ReadoutModel

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]

    def with_readout(self, readout: ReadoutModel) -> "CrossbarLayer":
        return replace(self, readout=readout)

    def with_calibration(self, calibration: Calibration) -> "CrossbarLayer":
        return replace(self, readout=replace(self.readout, calibration=calibration))


def device_conductances(device: MtjParams) -> tuple[float, float]:
    """(G_P, G_AP) at zero bias."""
    return (1.0 / mtj_resistance(device, MagState.PARALLEL),
            1.0 / mtj_resistance(device, MagState.ANTIPARALLEL))


def sense_resistance(rows: int, device: MtjParams, span: float, rails: Rails = Rails()) -> float:
    """r_sense that maps a full-scale dot product (rows * vdd) to +/- ``span`` volts."""
    g_p, g_ap = device_conductances(device)
    dg = g_p - g_ap
    if dg <= 0:
        raise ValueError("differential sense needs TMR > 0")
    return span / (rows * (rails.vdd - rails.vss) * dg)


def map_weights(weights, device: MtjParams, readout: ReadoutModel | None = None) -> CrossbarLayer:
    w = np.asarray(weights)
    if w.ndim != 2:
        raise ValueError("weights must be a matrix")
    if not np.all((w == 1) | (w == -1)):
        raise ValueError("weights must be +1 or -1")
    w = w.astype(np.int8)
    g_p, g_ap = device_conductances(device)
    g_pos = np.where(w > 0, g_p, g_ap)
    g_neg = np.where(w > 0, g_ap, g_p)
    if readout is None:
        readout = ReadoutModel(ReadoutKind.DIFFERENTIAL_SENSE,
                               r_sense=sense_resistance(w.shape[0], device, 1.0))
    return CrossbarLayer(w, device, g_pos, g_neg, readout)


def _check_inputs(layer: CrossbarLayer, v_inputs) -> np.ndarray:
    v = np.asarray(v_inputs, dtype=float)
    if v.shape[-1] != layer.rows:
        raise ValueError(f"expected {layer.rows} inputs, got {v.shape[-1]}")
    return v


def raw_column_voltages(layer: CrossbarLayer, v_inputs) -> np.ndarray:
    """Read-out voltages before calibration and clamping (batched over leading axes)."""
    v = _check_inputs(layer, v_inputs)
    ro = layer.readout
    if ro.kind is ReadoutKind.NORMALIZED_DIVIDER:
        return (v @ layer.g_pos) / layer.g_pos.sum(axis=0)
    return ro.r_sense * (v @ (layer.g_pos - layer.g_neg))


def column_voltages(layer: CrossbarLayer, v_inputs) -> np.ndarray:
    out = layer.readout.calibration.apply(raw_column_voltages(layer, v_inputs))
    if layer.readout.kind is ReadoutKind.DIFFERENTIAL_SENSE:
        out = np.clip(out, layer.readout.rails.vss, layer.readout.rails.vdd)
    return out


def mvm_ideal(weights, x) -> np.ndarray:
    """Exact dot products of ``x`` (rows, or batch x rows) with each column."""
    w = np.asarray(weights)
    x = np.asarray(x)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape} vs {w.shape}")
    return x @ w


# -- storage --------------------------------------------------------------------

def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_layers(layers, directory) -> Path:
    """Write each layer as little-endian int8 plus one JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, layer in enumerate(layers):
        name = f"layer{k}.i8"
        _atomic_write_bytes(directory / name, layer.weights.astype("<i1").tobytes(order="C"))
        cal = layer.readout.calibration
        entries.append({"layer_index": k, "rows": layer.rows, "cols": layer.cols, "file": name,
                        "readout": layer.readout.kind.value, "r_sense": layer.readout.r_sense,
                        "gain": cal.gain, "offset": cal.offset})
    manifest = directory / "crossbar.json"
    _atomic_write_bytes(manifest, (json.dumps({"schema": 1, "layers": entries}, indent=2) + "\n").encode())
    return manifest


def load_layers(manifest, device: MtjParams, rails: Rails = Rails()) -> list[CrossbarLayer]:
    manifest = Path(manifest)
    meta = json.loads(manifest.read_text())
    layers = []
    for e in sorted(meta["layers"], key=lambda e: e["layer_index"]):
        raw = (manifest.parent / e["file"]).read_bytes()
        if len(raw) != e["rows"] * e["cols"]:
            raise ValueError(f"layer {e['layer_index']}: size does not match manifest")
        w = np.frombuffer(raw, dtype="<i1").reshape(e["rows"], e["cols"])
        readout = ReadoutModel(ReadoutKind(e["readout"]), e["r_sense"],
                               Calibration(e["gain"], e["offset"]), rails)
        layers.append(map_weights(w, device, readout))
    return layers
