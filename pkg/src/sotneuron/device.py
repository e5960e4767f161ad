"""SOT-MRAM electrical model.

MTJ resistance in the parallel / antiparallel states with bias-dependent
TMR, plus the heavy-metal (write electrode) resistance. Everything is
stored in SI units; the ``from_*_units`` constructors take the customary
device units (nm, Ohm*um^2, uOhm*cm) and convert once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

NM = 1e-9
UM2 = 1e-12          # um^2 -> m^2
UOHM_CM = 1e-8       # uOhm*cm -> Ohm*m


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite value: {v!r}")


@dataclass(frozen=True)
class MtjGeometry:
    """Elliptical MTJ cross-section, lengths in metres."""

    length: float
    width: float

    def __post_init__(self):
        _finite(self.length, self.width)
        if self.length <= 0 or self.width <= 0:
            raise ValueError("MTJ length and width must be positive")

    @classmethod
    def from_nm(cls, length_nm: float, width_nm: float) -> "MtjGeometry":
        return cls(length_nm * NM, width_nm * NM)

    @property
    def area(self) -> float:
        return self.length * self.width * math.pi / 4


@dataclass(frozen=True)
class MtjParams:
    """MTJ stack parameters.

    ``ra_product`` is in Ohm*m^2, ``tmr0`` in percent (100 means R_AP = 2 R_P
    at zero bias) and ``v0`` is the TMR roll-off voltage.
    """

    geometry: MtjGeometry
    ra_product: float
    tmr0: float
    v0: float

    def __post_init__(self):
        _finite(self.ra_product, self.tmr0, self.v0)
        if self.ra_product <= 0:
            raise ValueError("RA product must be positive")
        if self.tmr0 < 0:
            raise ValueError("TMR0 must be non-negative")
        if self.v0 <= 0:
            raise ValueError("V0 must be positive")

    @classmethod
    def from_device_units(cls, length_nm=50.0, width_nm=30.0, ra_ohm_um2=10.0,
                          tmr0_percent=100.0, v0_volt=0.65) -> "MtjParams":
        return cls(MtjGeometry.from_nm(length_nm, width_nm), ra_ohm_um2 * UM2,
                   tmr0_percent, v0_volt)

    @property
    def r_mtj(self) -> float:
        """Parallel-state resistance RA / area."""
        return self.ra_product / self.geometry.area


class MagState(Enum):
    PARALLEL = 0.0
    ANTIPARALLEL = math.pi

    @property
    def theta(self) -> float:
        return self.value


@dataclass(frozen=True)
class HeavyMetalParams:
    """Heavy-metal strip; resistivity in Ohm*m, dimensions in metres."""

    resistivity: float
    length: float
    width: float
    thickness: float

    def __post_init__(self):
        _finite(self.resistivity, self.length, self.width, self.thickness)
        if min(self.resistivity, self.length, self.width, self.thickness) <= 0:
            raise ValueError("heavy-metal parameters must be strictly positive")

    @classmethod
    def from_device_units(cls, resistivity_uohm_cm=200.0, length_nm=100.0,
                          width_nm=50.0, thickness_nm=3.0) -> "HeavyMetalParams":
        return cls(resistivity_uohm_cm * UOHM_CM, length_nm * NM, width_nm * NM,
                   thickness_nm * NM)


def tmr_effective(tmr0: float, v_bias: float, v0: float) -> float:
    """Bias-dependent TMR ratio (dimensionless), ``tmr0`` given in percent."""
    _finite(tmr0, v_bias, v0)
    if v0 <= 0:
        raise ValueError("v0 must be positive")
    return (tmr0 / 100.0) / (1.0 + (v_bias / v0) ** 2)


def mtj_resistance_at_angle(params: MtjParams, theta: float, v_bias: float = 0.0) -> float:
    """Resistance for an arbitrary angle between free and reference layers."""
    tmr = tmr_effective(params.tmr0, v_bias, params.v0)
    return 2 * params.r_mtj * (1 + tmr) / (2 + tmr * (1 + math.cos(theta)))


def mtj_resistance(params: MtjParams, state: MagState, v_bias: float = 0.0) -> float:
    r = params.r_mtj
    if state is MagState.PARALLEL:
        return r
    return r * (1.0 + tmr_effective(params.tmr0, v_bias, params.v0))


def heavy_metal_resistance(params: HeavyMetalParams) -> float:
    return params.resistivity * params.length / (params.width * params.thickness)


DEVICE_KEYS = (
    "length_nm", "width_nm", "ra_ohm_um2", "tmr0_percent", "v0_volt",
    "hm_resistivity_uohm_cm", "hm_length_nm", "hm_width_nm", "hm_thickness_nm",
)

DEVICE_DEFAULTS: dict[str, float] = {
    "length_nm": 50.0,
    "width_nm": 30.0,
    "ra_ohm_um2": 10.0,
    "tmr0_percent": 100.0,
    "v0_volt": 0.65,
    "hm_resistivity_uohm_cm": 200.0,
    "hm_length_nm": 100.0,
    "hm_width_nm": 50.0,
    "hm_thickness_nm": 3.0,
}


def device_from_config(block: Mapping[str, Any] | None = None) -> tuple[MtjParams, HeavyMetalParams]:
    """Build device parameters from a JSON ``device`` block.

    Missing keys fall back to ``DEVICE_DEFAULTS``; unknown keys raise
    ``KeyError``.
    """
    block = dict(block or {})
    unknown = set(block) - set(DEVICE_KEYS)
    if unknown:
        raise KeyError(f"unknown device keys: {sorted(unknown)}")
    cfg = {**DEVICE_DEFAULTS, **{k: float(v) for k, v in block.items()}}
    mtj = MtjParams.from_device_units(cfg["length_nm"], cfg["width_nm"], cfg["ra_ohm_um2"],
                                      cfg["tmr0_percent"], cfg["v0_volt"])
    hm = HeavyMetalParams.from_device_units(cfg["hm_resistivity_uohm_cm"], cfg["hm_length_nm"],
                                            cfg["hm_width_nm"], cfg["hm_thickness_nm"])
    return mtj, hm
