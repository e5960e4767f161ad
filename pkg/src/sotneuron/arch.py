"""Architecture-level power / latency / energy estimate for an MLP.

Mixed-signal: every layer has its own DACs, crossbar, digital neurons and
ADCs and takes four clocks. Fully-analog: one DAC bank in front, one analog
core (crossbars + MTJ neurons) and one ADC bank at the output, one clock in
total.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum


class Style(Enum):
    MIXED_SIGNAL = "mixed"
    FULLY_ANALOG = "analog"


@dataclass(frozen=True)
class ComponentBudget:
    dac_uw: float = 8.66
    adc_uw: float = 41.98
    digital_neuron_uw: float = 493.4
    analog_neuron_uw: float = 18.04
    crossbar_layer_mw: tuple = (221.965, 12.225, 1.204)
    fully_analog_core_mw: float = 238.405

    def __post_init__(self):
        object.__setattr__(self, "crossbar_layer_mw", tuple(float(x) for x in self.crossbar_layer_mw))
        values = [self.dac_uw, self.adc_uw, self.digital_neuron_uw, self.analog_neuron_uw,
                  self.fully_analog_core_mw, *self.crossbar_layer_mw]
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise ValueError("component powers must be finite and non-negative")

    @classmethod
    def from_json(cls, block: dict | None) -> "ComponentBudget":
        block = dict(block or {})
        unknown = set(block) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown budget keys: {sorted(unknown)}")
        return cls(**block)


@dataclass(frozen=True)
class ArchSpec:
    dims: tuple = (400, 120, 84, 10)
    style: Style = Style.MIXED_SIGNAL
    clock_hz: float = 250e6
    clocks_per_layer: int = 4       # mixed-signal only

    def __post_init__(self):
        if len(self.dims) < 2:
            raise ValueError("need at least two layer widths")
        if not self.clock_hz > 0:
            raise ValueError("clock must be positive")

    @property
    def num_layers(self) -> int:
        return len(self.dims) - 1

    @property
    def total_clocks(self) -> int:
        if self.style is Style.MIXED_SIGNAL:
            return self.clocks_per_layer * self.num_layers
        return 1


@dataclass(frozen=True)
class BreakdownRow:
    layer: int | None            # None for rows shared by the whole network
    component: str
    count: int | None
    power_mw: float


@dataclass(frozen=True)
class ArchReport:
    style: Style
    rows: tuple
    macs: int
    power_w: float
    latency_ns: float
    energy_nj: float
    tops_per_w: float            # inf when the energy is zero

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "style": self.style.value,
            "rows": [asdict(r) for r in self.rows],
            "totals": {
                "power_w": self.power_w,
                "latency_ns": self.latency_ns,
                "energy_nj": self.energy_nj,
                "tops_per_w": self.tops_per_w if math.isfinite(self.tops_per_w) else None,
                "tops_per_w_infinite": not math.isfinite(self.tops_per_w),
                "macs": self.macs,
            },
        }


def mac_count(dims) -> int:
    return sum(int(a) * int(b) for a, b in zip(dims[:-1], dims[1:]))


def build_breakdown(spec: ArchSpec, budget: ComponentBudget = ComponentBudget()) -> list[BreakdownRow]:
    d = spec.dims
    if spec.style is Style.FULLY_ANALOG:
        return [
            BreakdownRow(None, "DAC", d[0], d[0] * budget.dac_uw / 1e3),
            BreakdownRow(None, "Core", None, budget.fully_analog_core_mw),
            BreakdownRow(None, "ADC", d[-1], d[-1] * budget.adc_uw / 1e3),
        ]
    if len(budget.crossbar_layer_mw) != spec.num_layers:
        raise ValueError(f"budget lists {len(budget.crossbar_layer_mw)} crossbar powers "
                         f"for {spec.num_layers} layers")
    rows = []
    for k in range(spec.num_layers):
        n_in, n_out = d[k], d[k + 1]
        rows += [
            BreakdownRow(k + 1, "DAC", n_in, n_in * budget.dac_uw / 1e3),
            BreakdownRow(k + 1, "Crossbar", None, budget.crossbar_layer_mw[k]),
            BreakdownRow(k + 1, "Neuron", n_out, n_out * budget.digital_neuron_uw / 1e3),
            BreakdownRow(k + 1, "ADC", n_out, n_out * budget.adc_uw / 1e3),
        ]
    return rows


def summarize(rows, spec: ArchSpec, macs: int | None = None) -> ArchReport:
    rows = tuple(rows)
    if not rows:
        raise ValueError("no breakdown rows")
    macs = mac_count(spec.dims) if macs is None else macs
    power_w = sum(r.power_mw for r in rows) / 1e3
    latency_s = spec.total_clocks / spec.clock_hz
    energy_j = power_w * latency_s
    tops_per_w = macs / energy_j / 1e12 if energy_j > 0 else math.inf
    return ArchReport(spec.style, rows, macs, power_w, latency_s * 1e9, energy_j * 1e9, tops_per_w)


def report(style: Style, budget: ComponentBudget = ComponentBudget(), dims=(400, 120, 84, 10)) -> ArchReport:
    spec = ArchSpec(tuple(dims), style)
    return summarize(build_breakdown(spec, budget), spec)


# published reductions of fully-analog over mixed-signal, and the published totals
CLAIMED_REDUCTION = {"power": 1.1, "latency": 12.0, "energy": 13.3}
PUBLISHED_TOTALS = {
    Style.MIXED_SIGNAL: {"power_w": 0.355, "latency_ns": 48.0, "energy_nj": 17.04, "tops_per_w": 3.41},
    Style.FULLY_ANALOG: {"power_w": 0.242, "latency_ns": 4.0, "energy_nj": 0.968, "tops_per_w": 60.86},
}


def compare(mixed: ArchReport, analog: ArchReport) -> dict:
    """Reduction ratios of fully-analog over mixed-signal, next to the claimed ones."""
    computed = {
        "power": mixed.power_w / analog.power_w,
        "latency": mixed.latency_ns / analog.latency_ns,
        "energy": mixed.energy_nj / analog.energy_nj,
    }
    pm, pa = PUBLISHED_TOTALS[Style.MIXED_SIGNAL], PUBLISHED_TOTALS[Style.FULLY_ANALOG]
    table = {
        "power": pm["power_w"] / pa["power_w"],
        "latency": pm["latency_ns"] / pa["latency_ns"],
        "energy": pm["energy_nj"] / pa["energy_nj"],
    }
    flags = {k: abs(table[k] - CLAIMED_REDUCTION[k]) / CLAIMED_REDUCTION[k] > 0.05 for k in computed}
    return {"computed": computed, "published": table, "claimed": dict(CLAIMED_REDUCTION),
            "claimed_mismatch": flags}


def format_report(rep: ArchReport) -> str:
    lines = [f"{rep.style.value} implementation", f"{'layer':>5}  {'component':<9} {'count':>5}  {'power (mW)':>11}"]
    for r in rep.rows:
        layer = "-" if r.layer is None else str(r.layer)
        count = "-" if r.count is None else str(r.count)
        lines.append(f"{layer:>5}  {r.component:<9} {count:>5}  {r.power_mw:11.4f}")
    tops = f"{rep.tops_per_w:.3f}" if math.isfinite(rep.tops_per_w) else "inf"
    lines += [
        f"power      {rep.power_w:.4f} W",
        f"latency    {rep.latency_ns:.3f} ns",
        f"energy     {rep.energy_nj:.4f} nJ",
        f"TOPS/W     {tops} ({rep.macs} MACs)",
    ]
    return "\n".join(lines)
