"""Square-law PFET/NFET model used by the inverter.

Region conditions and drain currents follow the three-region (cut-off,
triode, saturation) long-channel equations. Functions accept scalars or
numpy arrays for the terminal voltages.

The reference current expressions carry a leading minus on both
saturation cells, while the triode cells are positive. Read against the KCL balance at
the output node this flips sign at pinch-off, so currents are available
either as written (``drain_current_as_written``) or with a selectable sign
convention (``drain_current_physical``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np


class Polarity(Enum):
    P = "p"
    N = "n"


class FetRegion(IntEnum):
    CUTOFF = 0
    TRIODE = 1
    SATURATION = 2


class SignConvention(Enum):
    """Orientation of the transistor currents in the output-node balance.

    ``PHYSICAL`` makes every current positive when it leaves node OUT
    through the transistor. ``FLIP_P`` / ``FLIP_N`` apply that correction to
    one device only and keep the other as printed.
    """

    AS_WRITTEN = "as-written"
    PHYSICAL = "physical"
    FLIP_P = "flip-p"
    FLIP_N = "flip-n"

    @classmethod
    def parse(cls, text: str) -> "SignConvention":
        try:
            return cls(text)
        except ValueError:
            names = ", ".join(c.value for c in cls)
            raise ValueError(f"unknown sign convention {text!r} (expected one of {names})") from None


@dataclass(frozen=True)
class Rails:
    vdd: float = 0.8
    vss: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.vdd) and math.isfinite(self.vss)):
            raise ValueError("rails must be finite")
        if self.vdd <= self.vss:
            raise ValueError("vdd must exceed vss")


@dataclass(frozen=True)
class FetParams:
    beta: float
    v_threshold: float
    polarity: Polarity

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.polarity is Polarity.P and self.v_threshold >= 0:
            raise ValueError("PFET threshold must be negative")
        if self.polarity is Polarity.N and self.v_threshold <= 0:
            raise ValueError("NFET threshold must be positive")

    @classmethod
    def pfet(cls, beta=1.0e-2, v_threshold=-0.2) -> "FetParams":
        return cls(beta, v_threshold, Polarity.P)

    @classmethod
    def nfet(cls, beta=1.0e-2, v_threshold=0.2) -> "FetParams":
        return cls(beta, v_threshold, Polarity.N)


def _source(fet: FetParams, rails: Rails) -> float:
    return rails.vdd if fet.polarity is Polarity.P else rails.vss


def region_codes(fet: FetParams, rails: Rails, v_inv, v_out) -> np.ndarray:
    """Vectorised region classification returning ``FetRegion`` integer codes.

    Equalities resolve to saturation: at the on/off edge the device counts
    as on (and saturated), and at pinch-off it counts as saturated.
    """
    v_inv = np.asarray(v_inv, dtype=float)
    v_out = np.asarray(v_out, dtype=float)
    vt = fet.v_threshold
    if fet.polarity is Polarity.P:
        edge = rails.vdd + vt
        off = v_inv > edge
        triode = (v_out > v_inv - vt) & (v_inv < edge)
    else:
        edge = rails.vss + vt
        off = v_inv < edge
        triode = (v_out < v_inv - vt) & (v_inv > edge)
    codes = np.full(np.broadcast(v_inv, v_out).shape, int(FetRegion.SATURATION), dtype=np.int8)
    codes[np.broadcast_to(triode, codes.shape)] = FetRegion.TRIODE
    codes[np.broadcast_to(off, codes.shape)] = FetRegion.CUTOFF
    return codes


def classify_region(fet: FetParams, rails: Rails, v_inv: float, v_out: float) -> FetRegion:
    if not (math.isfinite(v_inv) and math.isfinite(v_out)):
        raise ValueError("voltages must be finite")
    return FetRegion(int(region_codes(fet, rails, v_inv, v_out)))


def _cells(fet: FetParams, rails: Rails, v_inv, v_out):
    """Triode and saturation table cells, both evaluated everywhere."""
    ref = _source(fet, rails)
    vov = v_inv - ref - fet.v_threshold
    vds = v_out - ref
    triode = fet.beta * (vov * vds - vds ** 2 / 2)
    sat = -fet.beta / 2 * vov ** 2
    return triode, sat


# (triode sign, saturation sign) applied on top of the printed cells
_SIGNS = {
    (SignConvention.AS_WRITTEN, Polarity.P): (1.0, 1.0),
    (SignConvention.AS_WRITTEN, Polarity.N): (1.0, 1.0),
    (SignConvention.PHYSICAL, Polarity.P): (-1.0, 1.0),
    (SignConvention.PHYSICAL, Polarity.N): (1.0, -1.0),
    (SignConvention.FLIP_P, Polarity.P): (-1.0, 1.0),
    (SignConvention.FLIP_P, Polarity.N): (1.0, 1.0),
    (SignConvention.FLIP_N, Polarity.P): (1.0, 1.0),
    (SignConvention.FLIP_N, Polarity.N): (1.0, -1.0),
}


def drain_current_physical(fet: FetParams, rails: Rails, v_inv, v_out,
                           convention: SignConvention = SignConvention.PHYSICAL):
    """Drain current under ``convention``; scalar in, float out."""
    codes = region_codes(fet, rails, v_inv, v_out)
    triode, sat = _cells(fet, rails, np.asarray(v_inv, float), np.asarray(v_out, float))
    s_tri, s_sat = _SIGNS[convention, fet.polarity]
    out = np.where(codes == FetRegion.TRIODE, s_tri * triode,
                   np.where(codes == FetRegion.SATURATION, s_sat * sat, 0.0))
    return float(out) if out.ndim == 0 else out


def drain_current_as_written(fet: FetParams, rails: Rails, v_inv, v_out):
    return drain_current_physical(fet, rails, v_inv, v_out, SignConvention.AS_WRITTEN)


FET_KEYS = ("beta_p", "beta_n", "vtp_volt", "vtn_volt", "vdd_volt", "vss_volt", "sign_convention")


def fets_from_config(block=None) -> tuple[FetParams, FetParams, Rails, SignConvention]:
    block = dict(block or {})
    unknown = set(block) - set(FET_KEYS)
    if unknown:
        raise KeyError(f"unknown fet keys: {sorted(unknown)}")
    pfet = FetParams.pfet(float(block.get("beta_p", 1.0e-2)), float(block.get("vtp_volt", -0.2)))
    nfet = FetParams.nfet(float(block.get("beta_n", 1.0e-2)), float(block.get("vtn_volt", 0.2)))
    rails = Rails(float(block.get("vdd_volt", 0.8)), float(block.get("vss_volt", 0.0)))
    convention = SignConvention.parse(block.get("sign_convention", "physical"))
    return pfet, nfet, rails, convention
