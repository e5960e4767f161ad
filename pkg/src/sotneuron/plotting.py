"""Figure rendering for the CLI reports (Agg backend, PNG files)."""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

REGION_COLOURS = {"I": "#dbe9f6", "II": "#c6dbef", "III": "#fde0c5", "IV": "#d9f0d3", "V": "#e5d8ec"}

plt.rcParams.update({
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
})


def savefig(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.stem + ".tmp" + path.suffix)
    fig.savefig(tmp, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    os.replace(tmp, path)
    return path


def plot_vtc(curve, boundaries, path, title="Neuron transfer curve"):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    edges = [curve.v_in[0], *(boundaries or []), curve.v_in[-1]]
    if boundaries and len(boundaries) == 4:
        for name, lo, hi in zip(REGION_COLOURS, edges[:-1], edges[1:]):
            ax.axvspan(lo, hi, color=REGION_COLOURS[name], lw=0)
            ax.text(0.5 * (lo + hi), curve.config.rails.vdd * 0.5, name, ha="center", fontsize=9)
    ax.plot(curve.v_in, curve.v_out, color="k", lw=1.5)
    ax.set_xlabel("$V_{IN}$ (V)")
    ax.set_ylabel("$V_{OUT}$ (V)")
    ax.set_title(title)
    return savefig(fig, path)


def plot_sweep(curves: dict, param_label: str, path, title=None):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for label, curve in curves.items():
        ax.plot(curve.v_in, curve.v_out, label=f"{param_label}={label}")
    ax.set_xlabel("$V_{IN}$ (V)")
    ax.set_ylabel("$V_{OUT}$ (V)")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    return savefig(fig, path)


def plot_series(x, y, xlabel, ylabel, path, title=None, marker="o"):
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(x, y, marker=marker)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    return savefig(fig, path)


def plot_heatmap(values, row_labels, col_labels, row_name, col_name, path, title, fmt="{:.2f}"):
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(4.8, 4.0))
    im = ax.imshow(values, cmap="viridis", origin="lower")
    ax.set_xticks(range(len(col_labels)), [str(c) for c in col_labels])
    ax.set_yticks(range(len(row_labels)), [str(r) for r in row_labels])
    ax.set_xlabel(col_name)
    ax.set_ylabel(row_name)
    ax.grid(False)
    for i in range(values.shape[0]):
        for j in range(values.shape[1]):
            ax.text(j, i, fmt.format(values[i, j]), ha="center", va="center", color="w", fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(title)
    return savefig(fig, path)


def plot_training(metrics, path):
    epochs = [m.epoch for m in metrics]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(epochs, [m.train_accuracy for m in metrics], label="train")
    if all(m.test_accuracy is not None for m in metrics):
        ax.plot(epochs, [m.test_accuracy for m in metrics], label="test")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.legend()
    return savefig(fig, path)


def plot_confusion(confusion, path, title="Confusion matrix"):
    conf = np.asarray(confusion)
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    ax.imshow(conf, cmap="Blues")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_xticks(range(10))
    ax.set_yticks(range(10))
    ax.grid(False)
    ax.set_title(title)
    return savefig(fig, path)


def plot_arch(reports, path):
    """Stacked per-component power bars, one bar per implementation style."""
    colours = {"DAC": "C0", "Crossbar": "C1", "Neuron": "C2", "ADC": "C3", "Core": "C4"}
    seen = set()
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    for x, rep in enumerate(reports):
        totals = {}
        for r in rep.rows:
            totals[r.component] = totals.get(r.component, 0.0) + r.power_mw
        bottom = 0.0
        for comp, p in totals.items():
            ax.bar(x, p, bottom=bottom, color=colours.get(comp), label=None if comp in seen else comp)
            seen.add(comp)
            bottom += p
    ax.set_xticks(range(len(reports)), [r.style.value for r in reports])
    ax.set_ylabel("power (mW)")
    ax.legend(fontsize=8)
    return savefig(fig, path)
