"""Two-MTJ + inverter sigmoid neuron.

Circuit: IN -- R_P -- INV -- R_AP -- OUT, with the inverter gates tied to
INV and its output at OUT. The DC output voltage is found by bracketed
bisection on the KCL residual at OUT

    r(v_out) = (v_in - v_out) / (R_P + R_AP) - (I_DSP + I_DSN)

with the gate voltage taken from the resistive divider. Under the physical
sign convention the residual is strictly decreasing in ``v_out`` so the
operating point is unique.

The closed-form region solutions (``eval_appendix``) are kept as a literal
transcription; ``reconcile`` compares them against the numerical solver for
every sign convention without asserting agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .device import MagState, MtjParams, mtj_resistance
from .fet import (FetParams, FetRegion, Rails, SignConvention, drain_current_physical,
                  region_codes)

KCL_TOL = 1e-12          # A
MAX_ITER = 200
EPS_DEN = 1e-12
MATCH_TOL = 1e-6            # V, closed form vs solver


class SolverError(RuntimeError):
    pass


class NoBracket(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class MissingRegion(RuntimeError):
    pass


class AppendixError(ArithmeticError):
    pass


class DegenerateDenominator(AppendixError):
    pass


class NegativeDiscriminant(AppendixError):
    pass


class NeuronRegion(Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"
    ANOMALY = "anomaly"


_PAIR_TO_REGION = {
    (FetRegion.TRIODE, FetRegion.CUTOFF): NeuronRegion.I,
    (FetRegion.TRIODE, FetRegion.SATURATION): NeuronRegion.II,
    (FetRegion.SATURATION, FetRegion.SATURATION): NeuronRegion.III,
    (FetRegion.SATURATION, FetRegion.TRIODE): NeuronRegion.IV,
    (FetRegion.CUTOFF, FetRegion.TRIODE): NeuronRegion.V,
}
_ORDERED = (NeuronRegion.I, NeuronRegion.II, NeuronRegion.III, NeuronRegion.IV, NeuronRegion.V)
# index: 3 * p_code + n_code
_REGION_TABLE = tuple(
    _PAIR_TO_REGION.get((FetRegion(p), FetRegion(n)), NeuronRegion.ANOMALY)
    for p in range(3) for n in range(3)
)


@dataclass(frozen=True)
class NeuronConfig:
    r_p: float
    r_ap: float
    pfet: FetParams = field(default_factory=FetParams.pfet)
    nfet: FetParams = field(default_factory=FetParams.nfet)
    rails: Rails = field(default_factory=Rails)

    def __post_init__(self):
        if not (self.r_p > 0 and self.r_ap > 0):
            raise ValueError("MTJ resistances must be positive")
        if not (math.isfinite(self.r_p) and math.isfinite(self.r_ap)):
            raise ValueError("MTJ resistances must be finite")

    @classmethod
    def from_device(cls, mtj: MtjParams, pfet: FetParams | None = None,
                    nfet: FetParams | None = None, rails: Rails | None = None,
                    v_bias: float = 0.0) -> "NeuronConfig":
        """MRAM1 parallel, MRAM2 antiparallel; TMR evaluated at a static ``v_bias``."""
        return cls(mtj_resistance(mtj, MagState.PARALLEL, v_bias),
                   mtj_resistance(mtj, MagState.ANTIPARALLEL, v_bias),
                   pfet or FetParams.pfet(), nfet or FetParams.nfet(), rails or Rails())

    @classmethod
    def default(cls) -> "NeuronConfig":
        return cls.from_device(MtjParams.from_device_units())

    @property
    def r_sum(self) -> float:
        return self.r_p + self.r_ap

    def snapshot(self) -> dict:
        return {
            "r_p_ohm": self.r_p, "r_ap_ohm": self.r_ap,
            "beta_p": self.pfet.beta, "beta_n": self.nfet.beta,
            "vtp_volt": self.pfet.v_threshold, "vtn_volt": self.nfet.v_threshold,
            "vdd_volt": self.rails.vdd, "vss_volt": self.rails.vss,
        }


@dataclass(frozen=True)
class NodeState:
    v_in: float
    v_out: float
    v_inv: float
    i_in: float
    i_dsp: float
    i_dsn: float

    @property
    def residual(self) -> float:
        return self.i_in - (self.i_dsp + self.i_dsn)


def v_inv(config: NeuronConfig, v_in, v_out):
    """Gate (divider midpoint) voltage."""
    return v_in - ((v_in - v_out) / (config.r_p + config.r_ap)) * config.r_p


def _currents(config, v_in, v_out, convention):
    vg = v_inv(config, v_in, v_out)
    i_in = (v_in - v_out) / (config.r_p + config.r_ap)
    ip = drain_current_physical(config.pfet, config.rails, vg, v_out, convention)
    in_ = drain_current_physical(config.nfet, config.rails, vg, v_out, convention)
    return vg, i_in, ip, in_


def kcl_residual(config: NeuronConfig, v_in, v_out, convention=SignConvention.PHYSICAL):
    _, i_in, ip, in_ = _currents(config, v_in, v_out, convention)
    return i_in - (ip + in_)


def search_bracket(config: NeuronConfig, v_in):
    span = np.abs(v_in)
    return config.rails.vss - span - 1.0, config.rails.vdd + span + 1.0


OK, NO_BRACKET, NO_CONVERGENCE = 0, 1, 2


@dataclass(frozen=True, eq=False)
class SweepSolution:
    v_in: np.ndarray
    v_out: np.ndarray     # nan where status != OK
    status: np.ndarray
    iterations: int


def solve_sweep(config: NeuronConfig, v_in, convention=SignConvention.PHYSICAL,
                tol: float = KCL_TOL, max_iter: int = MAX_ITER) -> SweepSolution:
    """Bisection on the KCL residual, run elementwise over an array of inputs.

    Each element is independent of the others. The interval is halved until
    it can no longer shrink in floating point, then the endpoint with the
    smaller residual is taken.
    """
    v_in = np.atleast_1d(np.asarray(v_in, dtype=float))
    lo, hi = search_bracket(config, v_in)
    r_lo = kcl_residual(config, v_in, lo, convention)
    r_hi = kcl_residual(config, v_in, hi, convention)
    bracketed = np.sign(r_lo) * np.sign(r_hi) <= 0
    it = 0
    while it < max_iter:
        mid = 0.5 * (lo + hi)
        active = bracketed & (mid > lo) & (mid < hi)
        if not active.any():
            break
        it += 1
        r_mid = kcl_residual(config, v_in, mid, convention)
        zero = active & (r_mid == 0)
        move_lo = active & (np.sign(r_mid) == np.sign(r_lo)) & ~zero
        move_hi = active & ~move_lo
        lo = np.where(move_lo | zero, mid, lo)
        r_lo = np.where(move_lo | zero, r_mid, r_lo)
        hi = np.where(move_hi, mid, hi)
        r_hi = np.where(move_hi, r_mid, r_hi)
    pick_lo = np.abs(r_lo) <= np.abs(r_hi)
    v_out = np.where(pick_lo, lo, hi)
    r_best = np.where(pick_lo, r_lo, r_hi)
    status = np.full(v_in.shape, OK, dtype=np.int8)
    unfinished = bracketed & (0.5 * (lo + hi) > lo) & (0.5 * (lo + hi) < hi)
    status[bracketed & ((np.abs(r_best) >= tol) | unfinished)] = NO_CONVERGENCE
    status[~bracketed] = NO_BRACKET
    v_out = np.where(status == OK, v_out, np.nan)
    return SweepSolution(v_in, v_out, status, it)


def node_state(config: NeuronConfig, v_in: float, v_out: float,
               convention=SignConvention.PHYSICAL) -> NodeState:
    vg, i_in, ip, in_ = _currents(config, float(v_in), float(v_out), convention)
    return NodeState(float(v_in), float(v_out), float(vg), float(i_in), float(ip), float(in_))


def solve_vout_numeric(config: NeuronConfig, v_in: float,
                       convention=SignConvention.PHYSICAL) -> NodeState:
    sol = solve_sweep(config, [v_in], convention)
    status = int(sol.status[0])
    if status == NO_BRACKET:
        lo, hi = search_bracket(config, v_in)
        raise NoBracket(f"KCL residual has no sign change on [{lo:.4g}, {hi:.4g}] V "
                        f"for v_in={v_in!r}, convention={convention.value}, "
                        f"config={config.snapshot()}")
    if status == NO_CONVERGENCE:
        raise NoConvergence(f"bisection did not reach |r| < {KCL_TOL:g} A for v_in={v_in!r}, "
                            f"convention={convention.value}")
    return node_state(config, v_in, sol.v_out[0], convention)


def region_codes_for(config: NeuronConfig, v_in, v_out) -> np.ndarray:
    """Index into ``_REGION_TABLE`` for each solved point."""
    vg = v_inv(config, np.asarray(v_in, float), np.asarray(v_out, float))
    p = region_codes(config.pfet, config.rails, vg, v_out)
    n = region_codes(config.nfet, config.rails, vg, v_out)
    return 3 * p.astype(np.int16) + n


def region_of(state: NodeState, config: NeuronConfig) -> NeuronRegion:
    code = int(region_codes_for(config, state.v_in, state.v_out))
    return _REGION_TABLE[code]


def regions_of(config: NeuronConfig, v_in, v_out) -> list[NeuronRegion]:
    return [_REGION_TABLE[int(c)] for c in np.atleast_1d(region_codes_for(config, v_in, v_out))]


# -- closed-form region solutions ---------------------------------------------

@dataclass(frozen=True)
class AnalyticIntermediates:
    t1: float
    t2: float


def appendix_intermediates(config: NeuronConfig, v_in: float) -> AnalyticIntermediates:
    bp, bn = config.pfet.beta, config.nfet.beta
    rp, rap = config.r_p, config.r_ap
    vdd, vtp, vtn = config.rails.vdd, config.pfet.v_threshold, config.nfet.v_threshold
    vin = v_in
    t1 = (bp**2 * rap**2 * (vdd - vin + vtp)**2 + bp**2 * rp**2 * vtp**2
          + 2 * bp**2 * rap * rp * vtp**2 + 2 * bp * rp * (vdd - vin + vtp)
          + 2 * bp * rap * vtp + 1)
    t2 = (bn**2 * rap**2 * (vin - vtn)**2 + bn**2 * rp**2 * vtn**2
          + 2 * bn**2 * rap * rp * vtn * (vtn - vin) - 2 * bn * rap * vtn
          + 2 * bn * rp * (vin - vtn) + 1)
    return AnalyticIntermediates(t1, t2)


def _sqrt(arg: float, what: str) -> float:
    if arg < 0:
        raise NegativeDiscriminant(f"{what} square-root argument is negative ({arg:.6g})")
    return math.sqrt(arg)


def _check_den(den: float, region: NeuronRegion) -> None:
    if abs(den) < EPS_DEN:
        raise DegenerateDenominator(f"region {region.value} denominator is {den:.3g}")


def eval_appendix(config: NeuronConfig, v_in: float, region: NeuronRegion):
    """Closed-form output voltage for ``region`` exactly as printed.

    No plausibility check is made: the returned voltage may lie outside the
    rails or belong to a different region. ``VSS`` does not enter the
    expressions (they assume a grounded source rail).
    """
    bp, bn = config.pfet.beta, config.nfet.beta
    rp, rap = config.r_p, config.r_ap
    vdd, vtp, vtn = config.rails.vdd, config.pfet.v_threshold, config.nfet.v_threshold
    vin = v_in
    t = appendix_intermediates(config, v_in)
    t1, t2 = t.t1, t.t2

    if region is NeuronRegion.I:
        den = bp * (rap - rp)
        _check_den(den, region)
        num = -1 - bp * rp * (vdd + vtp) + bp * rap * (vin - vtp) + _sqrt(t1, "T1")
    elif region is NeuronRegion.II:
        den = bp * rap**2 - bp * rp**2 + bn * rp**2
        _check_den(den, region)
        inner = (t1 - bn * bp * rap**2 * (vin - vtn)**2
                 - bn * bp * rp**2 * ((vdd - vtn)**2 + vtp * (vdd - vtn))
                 + 2 * bn * rp * (vin - vtn))
        num = (rp - rap - bp * rp**2 * (vdd - vtn + vtp) - bp * rap**2 * (vin - vtp)
               + bp * rap * rp * (vdd - vin) + bn * rap * rp * (vin - vtn)
               + (rap + rp) * _sqrt(inner, "region II"))
    elif region is NeuronRegion.III:
        den = bn * rp**2 - bp * rp**2
        _check_den(den, region)
        inner = (2 * bp * rp * (vdd - vin + vtp) - 2 * bn * rp * vtn
                 - bn * bp * rp**2 * ((vdd - vtn)**2 + vtp * (vtp - 2 * vtn + 2 * vdd))
                 + 1)
        num = (rp - rap - bp * rp**2 * (vdd - vtn + vtp) - bp * rap * rp * (vdd - vin)
               - bn * rap * rp * (vin - vtn) + (rap + rp) * _sqrt(inner, "region III"))
    elif region is NeuronRegion.IV:
        den = bp * rap**2 - bp * rp**2 + bn * rp**2
        _check_den(den, region)
        inner = (t2 - bn * bp * rap**2 * (vdd**2 + vtp**2 - 2 * vdd * vin + vtp * (vdd - vin))
                 - bn * bp * rp**2 * ((vdd + vtp)**2 - vtn * (vdd + vtp))
                 + 2 * bp * rp * (vdd - vin + vtp) + 2 * bp * rap * vtp)
        num = (rp + rap - bp * rp**2 * (vdd + vtp) + bn * rp**2 * vtn
               - bn * rap**2 * (vin - vtn) + bp * rap * rp * (vdd - vin + vtp)
               + bn * rap * rp * (vin - 2 * vtn) + (rap + rp) * _sqrt(inner, "region IV"))
    elif region is NeuronRegion.V:
        den = bn * (rap - rp)
        _check_den(den, region)
        num = 1 + bn * rap * (vin - vtn) - bn * rp * vtn - _sqrt(t2, "T2")
    else:
        raise ValueError(f"no closed form for region {region!r}")
    return num / den, t


# -- reconciliation -------------------------------------------------------------

@dataclass
class RegionDeviation:
    n_points: int = 0
    n_degenerate: int = 0
    max_abs_dev_volt: float | None = None

    def add(self, dev: float | None) -> None:
        self.n_points += 1
        if dev is None:
            self.n_degenerate += 1
        elif self.max_abs_dev_volt is None or dev > self.max_abs_dev_volt:
            self.max_abs_dev_volt = dev


@dataclass
class ReconciliationPoint:
    convention: SignConvention
    v_in: float
    region: str                 # region name, or "unsolved"
    v_out_numeric: float | None
    v_out_analytic: float | None
    note: str = ""


@dataclass
class ReconciliationReport:
    sections: dict[SignConvention, dict[str, RegionDeviation]]
    points: list[ReconciliationPoint]
    scores: dict[SignConvention, float]
    best_convention: SignConvention | None
    matched: dict = field(default_factory=dict)   # points within MATCH_TOL per convention

    def to_json(self) -> dict:
        conv = {}
        for c, regions in self.sections.items():
            conv[c.value] = {
                name: {"max_abs_dev_volt": d.max_abs_dev_volt, "n_points": d.n_points,
                       "n_degenerate": d.n_degenerate}
                for name, d in regions.items()
            }
        return {
            "schema": 1,
            "best_convention": self.best_convention.value if self.best_convention else None,
            "rms_dev_volt": {c.value: (s if math.isfinite(s) else None)
                             for c, s in self.scores.items()},
            "n_matched": {c.value: n for c, n in self.matched.items()},
            "conventions": conv,
        }


def reconcile(config: NeuronConfig, grid) -> ReconciliationReport:
    """Compare the closed forms with the numerical solver for every convention.

    Each grid point is bucketed once per convention under its numerically
    solved region (``anomaly`` or ``unsolved`` when it has none). Solver and
    closed-form failures are recorded per point. The best convention is the
    one whose closed forms reproduce the most points to within MATCH_TOL,
    ties broken by the smaller RMS deviation over evaluable points.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise ValueError("reconciliation grid is empty")
    sections, points, scores, matched = {}, [], {}, {}
    for conv in SignConvention:
        buckets: dict[str, RegionDeviation] = {}
        sol = solve_sweep(config, grid, conv)
        sq = []
        for v, vo, st in zip(grid, sol.v_out, sol.status):
            if st != OK:
                note = "no bracket" if st == NO_BRACKET else "no convergence"
                buckets.setdefault("unsolved", RegionDeviation()).add(None)
                points.append(ReconciliationPoint(conv, float(v), "unsolved", None, None, note))
                continue
            region = region_of(node_state(config, v, vo, conv), config)
            if region is NeuronRegion.ANOMALY:
                buckets.setdefault(region.value, RegionDeviation()).add(None)
                points.append(ReconciliationPoint(conv, float(v), region.value, float(vo), None,
                                                  "no closed form"))
                continue
            try:
                va, _ = eval_appendix(config, float(v), region)
            except AppendixError as exc:
                buckets.setdefault(region.value, RegionDeviation()).add(None)
                points.append(ReconciliationPoint(conv, float(v), region.value, float(vo), None,
                                                  type(exc).__name__))
                continue
            dev = abs(va - vo)
            sq.append(dev * dev)
            buckets.setdefault(region.value, RegionDeviation()).add(dev)
            points.append(ReconciliationPoint(conv, float(v), region.value, float(vo), va))
        sections[conv] = buckets
        scores[conv] = math.sqrt(sum(sq) / len(sq)) if sq else math.inf
        matched[conv] = sum(1 for d in sq if d <= MATCH_TOL * MATCH_TOL)
    finite = [c for c, s in scores.items() if math.isfinite(s)]
    best = min(finite, key=lambda c: (-matched[c], scores[c])) if finite else None
    return ReconciliationReport(sections, points, scores, best, matched)


# -- transfer curve -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransferCurve:
    v_in: np.ndarray
    v_out: np.ndarray
    v_inv: np.ndarray
    i_in: np.ndarray
    regions: tuple
    config: NeuronConfig
    convention: SignConvention = SignConvention.PHYSICAL

    def __post_init__(self):
        if np.any(np.diff(self.v_in) <= 0):
            raise ValueError("v_in samples must be strictly increasing")

    def __len__(self) -> int:
        return len(self.v_in)

    @property
    def samples(self) -> list[tuple[float, float, NeuronRegion]]:
        return list(zip(self.v_in.tolist(), self.v_out.tolist(), self.regions))

    def interpolate(self, v):
        """Piecewise-linear lookup, clamped to the end samples."""
        return np.interp(v, self.v_in, self.v_out)

    def slopes(self) -> np.ndarray:
        return np.diff(self.v_out) / np.diff(self.v_in)


def trace_vtc(config: NeuronConfig, v_min: float = -2.0, v_max: float = 2.0, n: int = 401,
              convention=SignConvention.PHYSICAL) -> TransferCurve:
    if n < 2:
        raise ValueError("need at least two samples")
    if not v_min < v_max:
        raise ValueError("v_min must be below v_max")
    v = np.linspace(v_min, v_max, n)
    sol = solve_sweep(config, v, convention)
    bad = np.flatnonzero(sol.status != OK)
    if bad.size:
        k = bad[0]
        exc = NoBracket if sol.status[k] == NO_BRACKET else NoConvergence
        raise exc(f"solver failed at {bad.size} of {n} points (first at v_in={v[k]:.6g}, "
                  f"convention={convention.value})")
    vo = sol.v_out
    vg, i_in, _, _ = _currents(config, v, vo, convention)
    return TransferCurve(v, vo, vg, i_in, tuple(regions_of(config, v, vo)), config, convention)


def region_boundaries(config: NeuronConfig, v_min: float = -2.0, v_max: float = 2.0,
                      n: int = 401, tol: float = 1e-6) -> list[float]:
    """Input voltages where the solved operating region changes.

    Changes are first located on an ``n``-point grid, then each is refined
    by bisection on "region equals the left-hand region" to ``tol``.
    """
    curve = trace_vtc(config, v_min, v_max, n)
    regions = curve.regions
    seen = set(regions) - {NeuronRegion.ANOMALY}
    if len(seen) < 5:
        missing = [r.value for r in _ORDERED if r not in seen]
        raise MissingRegion(f"regions {missing} not reached over [{v_min}, {v_max}] V")
    out = []
    for k in range(n - 1):
        if regions[k] is regions[k + 1]:
            continue
        lo, hi = curve.v_in[k], curve.v_in[k + 1]
        left = regions[k]
        while hi - lo > tol / 4:
            mid = 0.5 * (lo + hi)
            if region_of(solve_vout_numeric(config, mid), config) is left:
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi))
    if len(out) != 4:
        raise MissingRegion(f"expected 4 region changes, found {len(out)}")
    return out


# -- power ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PowerTerms:
    v_in: np.ndarray
    resistor: np.ndarray
    pmos: np.ndarray
    nmos: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.resistor + self.pmos + self.nmos


def power_terms(config: NeuronConfig, v_in, v_out) -> PowerTerms:
    """Element dissipations at solved DC points (physical convention)."""
    v_in = np.asarray(v_in, float)
    v_out = np.asarray(v_out, float)
    _, i_in, ip, in_ = _currents(config, v_in, v_out, SignConvention.PHYSICAL)
    resistor = i_in * (v_in - v_out)
    pmos = (-ip) * (config.rails.vdd - v_out)
    nmos = in_ * (v_out - config.rails.vss)
    return PowerTerms(v_in, resistor, pmos, nmos)


def average_power(config: NeuronConfig, v_min: float = -2.0, v_max: float = 2.0,
                  n: int = 401) -> float:
    curve = trace_vtc(config, v_min, v_max, n)
    return float(np.mean(power_terms(config, curve.v_in, curve.v_out).total))


NEURON_KEYS = ("v_bias_volt", "v_min", "v_max", "n")


def neuron_from_config(device_block=None, fet_block=None, neuron_block=None):
    """NeuronConfig plus sweep settings from the JSON config blocks."""
    from .device import device_from_config
    from .fet import fets_from_config

    neuron_block = dict(neuron_block or {})
    unknown = set(neuron_block) - set(NEURON_KEYS)
    if unknown:
        raise KeyError(f"unknown neuron keys: {sorted(unknown)}")
    mtj, _ = device_from_config(device_block)
    pfet, nfet, rails, convention = fets_from_config(fet_block)
    cfg = NeuronConfig.from_device(mtj, pfet, nfet, rails, float(neuron_block.get("v_bias_volt", 0.0)))
    sweep = {"v_min": float(neuron_block.get("v_min", -2.0)),
             "v_max": float(neuron_block.get("v_max", 2.0)),
             "n": int(neuron_block.get("n", 401))}
    return cfg, convention, sweep
