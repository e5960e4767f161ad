"""Command-line front end.

Every command writes CSV/JSON data plus PNG figures under ``--out``.
Exit codes: 0 success, 1 runtime or solver failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .arch import ComponentBudget, Style, build_breakdown, compare, format_report, summarize, ArchSpec
from .config import ConfigError, RunConfig, load_config
from .fet import SignConvention
from .mlp import (CalibrationError, Dataset, InferenceMode, MnistFormatError, TrainingDiverged,
                  build_analog_pipeline, evaluate, init_model, load_mnist_idx, load_model,
                  save_model, to_20x20, train)
from .neuron import (MissingRegion, NeuronRegion, SolverError, average_power, power_terms,
                     reconcile, region_boundaries, trace_vtc)

log = logging.getLogger("sotneuron")


class UsageError(Exception):
    pass


# -- output helpers ---------------------------------------------------------------

def _atomic_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def write_json(path: Path, payload) -> Path:
    return _atomic_text(path, json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_csv(path: Path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return _atomic_text(path, buf.getvalue())


def _figures(args):
    if args.no_plots:
        return None
    from . import plotting
    return plotting


def _setup_logging(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    for old in log.handlers:
        old.close()
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.INFO)


def _float_list(text: str) -> list[float]:
    items = [t for t in text.split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    try:
        values = [float(t) for t in items]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None
    if any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError("values must be positive")
    return values


def _convention(text: str) -> SignConvention:
    try:
        return SignConvention.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _label(v: float) -> str:
    return f"{v:g}"


# -- vtc ----------------------------------------------------------------------------

VTC_HEADER = ("v_in", "v_out", "v_inv", "i_in_amp", "region", "convention")


def _vtc_rows(curve):
    for vi, vo, vg, ii, reg in zip(curve.v_in, curve.v_out, curve.v_inv, curve.i_in, curve.regions):
        yield vi, vo, vg, ii, reg.value, curve.convention.value


def cmd_vtc(args, cfg: RunConfig) -> int:
    neuron, convention, sweep = cfg.neuron_config()
    convention = args.convention or convention
    v_min = sweep["v_min"] if args.vmin is None else args.vmin
    v_max = sweep["v_max"] if args.vmax is None else args.vmax
    n = sweep["n"] if args.n is None else args.n
    if n < 2 or not v_min < v_max:
        raise UsageError("need --n >= 2 and --vmin < --vmax")
    curve = trace_vtc(neuron, v_min, v_max, n, convention)
    write_csv(args.out / "vtc.csv", VTC_HEADER, _vtc_rows(curve))
    try:
        bounds = region_boundaries(neuron, v_min, v_max)
        payload = {"schema": 1, "boundaries_volt": bounds, "regions": [r.value for r in _REGIONS]}
    except MissingRegion as exc:
        bounds = None
        payload = {"schema": 1, "boundaries_volt": None, "error": str(exc)}
    payload["config"] = neuron.snapshot()
    write_json(args.out / "boundaries.json", payload)
    plots = _figures(args)
    if plots:
        plots.plot_vtc(curve, bounds, args.out / "vtc.png")
    print(f"wrote {n} points to {args.out / 'vtc.csv'}")
    return 0


_REGIONS = (NeuronRegion.I, NeuronRegion.II, NeuronRegion.III, NeuronRegion.IV, NeuronRegion.V)


# -- sweep --------------------------------------------------------------------------

def cmd_sweep(args, cfg: RunConfig) -> int:
    if args.param == "ra":
        fixed = {"tmr0_percent": args.tmr if args.tmr is not None else 200.0}
        key, label = "ra_ohm_um2", "RA"
    else:
        fixed = {"ra_ohm_um2": args.ra if args.ra is not None else 15.0}
        key, label = "tmr0_percent", "TMR"
    curves, rows = {}, []
    for value in args.values:
        neuron, _, sweep = cfg.neuron_config(**fixed, **{key: value})
        curve = trace_vtc(neuron, sweep["v_min"], sweep["v_max"], sweep["n"])
        curves[_label(value)] = curve
        write_csv(args.out / f"vtc_{args.param}_{_label(value)}.csv", VTC_HEADER, _vtc_rows(curve))
        p = float(np.mean(power_terms(neuron, curve.v_in, curve.v_out).total))
        rows.append((value, p, float(np.max(np.abs(curve.slopes())))))
    write_csv(args.out / f"sweep_{args.param}.csv", ("param_value", "avg_power_w", "max_abs_slope"), rows)
    plots = _figures(args)
    if plots:
        fixed_txt = ", ".join(f"{k}={v:g}" for k, v in fixed.items())
        plots.plot_sweep(curves, label, args.out / f"sweep_{args.param}.png", title=fixed_txt)
        plots.plot_series([r[0] for r in rows], [r[1] * 1e6 for r in rows], label,
                          "average power (uW)", args.out / f"sweep_{args.param}_power.png")
    print(f"swept {label} over {len(rows)} values")
    return 0


# -- data / training ------------------------------------------------------------------

def _load_data(images, labels) -> Dataset:
    for p in (images, labels):
        if p is None or not Path(p).exists():
            raise UsageError(f"data file not found: {p}")
    return to_20x20(load_mnist_idx(images, labels))


def cmd_train(args, cfg: RunConfig) -> int:
    data = _load_data(args.images, args.labels)
    test = _load_data(args.test_images, args.test_labels) if args.test_images else None
    tc = cfg.train_config()
    if args.epochs is not None:
        tc = type(tc)(**{**tc.__dict__, "epochs": args.epochs})
    model = init_model(cfg.dims, tc.seed, tc.init_scale, tc.activation_gain)
    log.info("training %s for %d epochs (seed %d)", cfg.dims, tc.epochs, tc.seed)
    model, metrics = train(model, data, tc, test, progress=lambda m: log.info("epoch %d: %s", m.epoch, m))
    save_model(model, args.out / "model.json")
    as_dict = [m.__dict__ for m in metrics]
    write_json(args.out / "metrics.json", {"schema": 1, "seed": tc.seed, "train": tc.__dict__,
                                           "initial": as_dict[0], "epochs": as_dict[1:]})
    plots = _figures(args)
    if plots:
        plots.plot_training(metrics, args.out / "training.png")
    last = metrics[-1]
    print(f"epoch {last.epoch}: train acc {last.train_accuracy:.4f}"
          + (f", test acc {last.test_accuracy:.4f}" if last.test_accuracy is not None else ""))
    return 0


def _analog_pipeline(cfg, model, tmr, ra, calib: np.ndarray):
    over = {}
    if tmr is not None:
        over["tmr0_percent"] = tmr
    if ra is not None:
        over["ra_ohm_um2"] = ra
    neuron, _, sweep = cfg.neuron_config(**over)
    device, _ = cfg.device_params(**over)
    curve = trace_vtc(neuron, sweep["v_min"], sweep["v_max"], max(sweep["n"], 4001))
    bounds = region_boundaries(neuron, sweep["v_min"], sweep["v_max"])
    return build_analog_pipeline(model, curve, bounds, device, calib), neuron, sweep


def _calibration_images(args, data: Dataset) -> np.ndarray:
    if args.calib_images:
        calib = _load_data(args.calib_images, args.calib_labels)
        return calib.images[:args.calib_n]
    log.warning("no --calib-images given; calibrating on the evaluation images")
    return data.images[:args.calib_n]


def cmd_eval(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    data = _load_data(args.images, args.labels)
    mode = InferenceMode(args.mode)
    pipeline = None
    if mode is InferenceMode.ANALOG:
        pipeline, _, _ = _analog_pipeline(cfg, model, args.tmr, args.ra, _calibration_images(args, data))
    res = evaluate(model, data, mode, pipeline)
    device = {**cfg.device}
    payload = {"schema": 1, **res.to_json(), "mode": mode.value,
               "tmr": args.tmr if args.tmr is not None else device.get("tmr0_percent", 100.0),
               "ra": args.ra if args.ra is not None else device.get("ra_ohm_um2", 10.0),
               "n_samples": len(data)}
    write_json(args.out / f"eval_{mode.value}.json", payload)
    plots = _figures(args)
    if plots:
        plots.plot_confusion(res.confusion, args.out / f"confusion_{mode.value}.png",
                             title=f"{mode.value} accuracy {res.accuracy:.4f}")
    print(f"{mode.value} accuracy {res.accuracy:.4f}")
    return 0


def cmd_grid(args, cfg: RunConfig) -> int:
    """Analog accuracy and neuron power over a TMR x RA grid."""
    model = load_model(args.model)
    data = _load_data(args.images, args.labels)
    calib = _calibration_images(args, data)
    ideal = evaluate(model, data).accuracy
    acc = np.zeros((len(args.tmr_values), len(args.ra_values)))
    power = np.zeros_like(acc)
    rows = []
    for i, tmr in enumerate(args.tmr_values):
        for j, ra in enumerate(args.ra_values):
            pipeline, neuron, sweep = _analog_pipeline(cfg, model, tmr, ra, calib)
            acc[i, j] = evaluate(model, data, InferenceMode.ANALOG, pipeline).accuracy
            power[i, j] = average_power(neuron, sweep["v_min"], sweep["v_max"], sweep["n"])
            rows.append((tmr, ra, acc[i, j], power[i, j]))
            log.info("TMR %g RA %g: accuracy %.4f, power %.4g W", tmr, ra, acc[i, j], power[i, j])
    write_csv(args.out / "grid.csv", ("tmr0_percent", "ra_ohm_um2", "accuracy", "avg_power_w"), rows)
    best = np.unravel_index(np.argmax(acc), acc.shape)
    payload = {"schema": 1, "ideal_accuracy": ideal, "tmr_values": args.tmr_values,
               "ra_values": args.ra_values, "accuracy": acc.tolist(), "avg_power_w": power.tolist(),
               "best": {"tmr0_percent": args.tmr_values[best[0]], "ra_ohm_um2": args.ra_values[best[1]],
                        "accuracy": float(acc[best])}}
    write_json(args.out / "grid.json", payload)
    plots = _figures(args)
    if plots:
        plots.plot_heatmap(acc * 100, args.tmr_values, args.ra_values, "TMR0 (%)", "RA (Ohm um^2)",
                           args.out / "grid_accuracy.png", "analog accuracy (%)")
        plots.plot_heatmap(power * 1e6, args.tmr_values, args.ra_values, "TMR0 (%)", "RA (Ohm um^2)",
                           args.out / "grid_power.png", "average neuron power (uW)", fmt="{:.1f}")
    print(f"ideal {ideal:.4f}; best analog {acc[best]:.4f} at TMR {args.tmr_values[best[0]]:g}, "
          f"RA {args.ra_values[best[1]]:g}")
    return 0


# -- arch / reconcile ------------------------------------------------------------------

def cmd_arch(args, cfg: RunConfig) -> int:
    budget = cfg.budget()
    if args.budget:
        try:
            budget = ComponentBudget.from_json(json.loads(Path(args.budget).read_text()))
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad budget file {args.budget}: {exc}") from exc
    styles = [Style.MIXED_SIGNAL, Style.FULLY_ANALOG] if args.style == "both" else [Style(args.style)]
    reports = {}
    for style in styles:
        spec = ArchSpec(cfg.dims, style)
        rep = summarize(build_breakdown(spec, budget), spec)
        reports[style] = rep
        text = format_report(rep)
        _atomic_text(args.out / f"arch_{style.value}.txt", text + "\n")
        write_json(args.out / f"arch_{style.value}.json", rep.to_json())
        print(text)
        print()
    if len(reports) == 2:
        cmp_ = compare(reports[Style.MIXED_SIGNAL], reports[Style.FULLY_ANALOG])
        write_json(args.out / "arch_comparison.json", {"schema": 1, **cmp_})
        for k in ("power", "latency", "energy"):
            flag = "  <- differs from claimed" if cmp_["claimed_mismatch"][k] else ""
            print(f"{k:8s} reduction: computed {cmp_['computed'][k]:.2f}x, "
                  f"published {cmp_['published'][k]:.2f}x, claimed {cmp_['claimed'][k]:.1f}x{flag}")
    plots = _figures(args)
    if plots:
        plots.plot_arch(list(reports.values()), args.out / "arch_power.png")
    return 0


def cmd_reconcile(args, cfg: RunConfig) -> int:
    neuron, _, sweep = cfg.neuron_config()
    v_min = sweep["v_min"] if args.vmin is None else args.vmin
    v_max = sweep["v_max"] if args.vmax is None else args.vmax
    if args.n < 1:
        raise UsageError("--n must be positive")
    rep = reconcile(neuron, np.linspace(v_min, v_max, args.n))
    payload = rep.to_json()
    payload["config"] = neuron.snapshot()
    write_json(args.out / "reconcile.json", payload)
    best = rep.best_convention.value if rep.best_convention else "none"
    print(f"best-matching convention: {best}")
    return 0


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sotneuron", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("vtc", parents=[common], help="solve the neuron transfer curve")
    s.add_argument("--vmin", type=float)
    s.add_argument("--vmax", type=float)
    s.add_argument("--n", type=int)
    s.add_argument("--convention", type=_convention)
    s.set_defaults(func=cmd_vtc)

    s = sub.add_parser("sweep", parents=[common], help="sweep RA or TMR0")
    s.add_argument("--param", choices=("ra", "tmr"), required=True)
    s.add_argument("--values", type=_float_list, required=True)
    s.add_argument("--tmr", type=float, help="fixed TMR0 for an RA sweep (default 200)")
    s.add_argument("--ra", type=float, help="fixed RA for a TMR sweep (default 15)")
    s.set_defaults(func=cmd_sweep)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--images", type=Path, required=True, help="MNIST IDX image file")
    data.add_argument("--labels", type=Path, required=True, help="MNIST IDX label file")

    s = sub.add_parser("train", parents=[common, data], help="train the binarized MLP")
    s.add_argument("--test-images", type=Path)
    s.add_argument("--test-labels", type=Path)
    s.add_argument("--epochs", type=int)
    s.set_defaults(func=cmd_train)

    analog = argparse.ArgumentParser(add_help=False)
    analog.add_argument("--model", type=Path, required=True)
    analog.add_argument("--calib-images", type=Path, help="images used to calibrate the crossbars")
    analog.add_argument("--calib-labels", type=Path)
    analog.add_argument("--calib-n", type=int, default=2000)

    s = sub.add_parser("eval", parents=[common, data, analog], help="evaluate a trained model")
    s.add_argument("--mode", choices=("ideal", "analog"), default="ideal")
    s.add_argument("--tmr", type=float)
    s.add_argument("--ra", type=float)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("grid", parents=[common, data, analog], help="analog accuracy over TMR x RA")
    s.add_argument("--tmr-values", type=_float_list, default=[100.0, 200.0, 300.0, 400.0])
    s.add_argument("--ra-values", type=_float_list, default=[5.0, 10.0, 15.0, 20.0])
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("arch", parents=[common], help="architecture power/latency/energy report")
    s.add_argument("--style", choices=("mixed", "analog", "both"), default="both")
    s.add_argument("--budget", type=Path, help="JSON component budget")
    s.set_defaults(func=cmd_arch)

    s = sub.add_parser("reconcile", parents=[common], help="closed forms vs numerical solver")
    s.add_argument("--vmin", type=float)
    s.add_argument("--vmax", type=float)
    s.add_argument("--n", type=int, default=101)
    s.set_defaults(func=cmd_reconcile)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        _setup_logging(args.out)
        log.info("command %s", args.command)
        t0 = time.perf_counter()
        code = args.func(args, cfg)
        log.info("done in %.2f s", time.perf_counter() - t0)
        return code
    except (ConfigError, UsageError) as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, MissingRegion, CalibrationError, MnistFormatError, TrainingDiverged) as exc:
        print(f"{parser.prog}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
