"""Raw soft-error-rate models, de-rating factors and ASIC-level aggregation.

Rates are in FIT per Mbit (equivalently per Mcell).  Element sizes are in
Mbit; ``RateModelConstants.mbit_cells`` selects whether one Mbit means 1e6
(decimal, default) or 2**20 (binary) cells.

Two temporal de-rating conventions exist for combinational logic:

* ``TdrMode.PAPER_COMPAT`` multiplies the pulse width in ps by the clock
  frequency in MHz as a bare number.  It exceeds 1 at high frequency but is
  the convention that reproduces the published SER table.
* ``TdrMode.PHYSICAL`` uses pulse width over clock period, clamped to [0, 1].
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .envflux import (
    DEFAULT_LOCATIONS,
    AltitudeMode,
    Environment,
    GeoPosition,
    LocationFactorTable,
    acceleration_factor,
)
from .errors import ConfigurationError, DomainError, UsageError

__all__ = [
    "TdrMode",
    "ElementKind",
    "RateModelConstants",
    "DeRating",
    "DesignElement",
    "OperatingPoint",
    "Design",
    "raw_ser_seq",
    "raw_ser_comb",
    "tdr_seq",
    "tdr_comb",
    "seq_fail_rate",
    "mem_fail_rate",
    "asic_ser",
    "load_design",
    "design_from_dict",
]

VDD_WINDOW = (0.5, 2.0)
FREQ_WINDOW_MHZ = (0.0, 2.0)


class TdrMode(enum.Enum):
    PAPER_COMPAT = "paper"
    PHYSICAL = "physical"


class ElementKind(enum.Enum):
    SEQUENTIAL = "sequential"
    COMBINATIONAL = "combinational"
    MEMORY = "memory"


@dataclass(frozen=True)
class RateModelConstants:
    seq_nominal_fit_per_mcell: float = 100.0
    comb_nominal_fit_per_mcell: float = 50.0
    nominal_vdd_volts: float = 1.2
    pw_ref_ps: float = 50.0
    pw_min_ps: float = 10.0
    max_freq_hz: float = 2.0e6
    mbit_cells: float = 1.0e6

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"rate-model constant {name} must be positive and finite")
        if self.pw_min_ps > self.pw_ref_ps:
            raise ConfigurationError("pw_min_ps must not exceed pw_ref_ps")

    @property
    def size_scale(self) -> float:
        """Cells per Mbit relative to the 1e6 cells the FIT/Mcell rates are quoted for."""
        return self.mbit_cells / 1.0e6

    @classmethod
    def binary(cls, **kw) -> "RateModelConstants":
        return cls(mbit_cells=float(2**20), **kw)


@dataclass(frozen=True)
class DeRating:
    """Logic, functional and temporal de-rating factors.

    ``tdr`` is only used where a fixed temporal factor is wanted (e.g. in
    ``seq_fail_rate`` inputs); ``asic_ser`` derives TDR from the operating
    point.  In paper-compat mode TDR may exceed 1.
    """

    ldr: float = 0.25
    fdr: float = 0.25
    tdr: float = 1.0
    physical: bool = False

    def __post_init__(self):
        for name in ("ldr", "fdr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")
        if not self.tdr >= 0.0:
            raise DomainError(f"tdr must be non-negative, got {self.tdr}")
        if self.physical and self.tdr > 1.0:
            raise DomainError(f"tdr must lie in [0, 1] in physical mode, got {self.tdr}")

    def factors(self) -> tuple[float, float, float]:
        return (self.ldr, self.tdr, self.fdr)


@dataclass(frozen=True)
class DesignElement:
    kind: ElementKind
    size_mbits: float
    ecc: bool = False
    raw_sbu_fit_per_mb: float = 0.0
    raw_mbu_fit_per_mb: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not (self.size_mbits >= 0 and math.isfinite(self.size_mbits)):
            raise DomainError(f"element size must be finite and non-negative, got {self.size_mbits}")
        if self.kind is ElementKind.MEMORY:
            for attr in ("raw_sbu_fit_per_mb", "raw_mbu_fit_per_mb"):
                v = getattr(self, attr)
                if not (v >= 0 and math.isfinite(v)):
                    raise DomainError(f"{attr} must be finite and non-negative, got {v}")
        elif self.ecc or self.raw_sbu_fit_per_mb or self.raw_mbu_fit_per_mb:
            raise ConfigurationError(f"{self.kind.value} elements carry no ECC/SBU/MBU fields")

    @classmethod
    def sequential(cls, size_mbits: float, name: str = "") -> "DesignElement":
        return cls(ElementKind.SEQUENTIAL, size_mbits, name=name)

    @classmethod
    def combinational(cls, size_mbits: float, name: str = "") -> "DesignElement":
        return cls(ElementKind.COMBINATIONAL, size_mbits, name=name)

    @classmethod
    def memory(cls, size_mbits: float, sbu: float, mbu: float, ecc: bool = False, name: str = "") -> "DesignElement":
        return cls(ElementKind.MEMORY, size_mbits, ecc, sbu, mbu, name)


@dataclass(frozen=True)
class OperatingPoint:
    """One evaluation point of the rate model.

    ``pulse_width_ps`` defaults to the environment's typical pulse width.
    ``location`` and ``altitude_ft`` are descriptive (they are what the
    acceleration factor was computed from); ``position`` is set for
    geographic sweeps.
    """

    vdd_volts: float
    freq_mhz: float
    env: Environment = Environment.NEUTRON
    pulse_width_ps: float | None = None
    acceleration_factor: float = 1.0
    location: str = "NYC"
    altitude_ft: float = 0.0
    position: GeoPosition | None = None

    def __post_init__(self):
        if self.pulse_width_ps is None:
            object.__setattr__(self, "pulse_width_ps", self.env.default_pulse_width_ps)
        lo, hi = VDD_WINDOW
        if not lo <= self.vdd_volts <= hi:
            raise DomainError(f"supply voltage {self.vdd_volts} V outside validity window [{lo}, {hi}]")
        lo, hi = FREQ_WINDOW_MHZ
        if not lo <= self.freq_mhz <= hi:
            raise DomainError(f"frequency {self.freq_mhz} MHz outside [{lo}, {hi}]")
        if not self.pulse_width_ps >= 10.0:
            raise DomainError(f"pulse width below 10 ps ({self.pulse_width_ps} ps)")
        if not self.acceleration_factor > 0:
            raise DomainError(f"acceleration factor must be positive, got {self.acceleration_factor}")

    @property
    def freq_hz(self) -> float:
        return self.freq_mhz * 1.0e6


def raw_ser_seq(vdd_volts: float, c: RateModelConstants = RateModelConstants()) -> float:
    """Raw sequential SEU rate in FIT/Mcell; 100 at the nominal 1.2 V."""
    lo, hi = VDD_WINDOW
    if not lo <= vdd_volts <= hi:
        raise DomainError(f"supply voltage {vdd_volts} V outside validity window [{lo}, {hi}]")
    return c.seq_nominal_fit_per_mcell * (1.0 + (c.nominal_vdd_volts - vdd_volts))


def raw_ser_comb(vdd_volts: float, pulse_width_ps: float, c: RateModelConstants = RateModelConstants()) -> float:
    """Raw combinational SET rate in FIT/Mcell; longer pulses are rarer."""
    lo, hi = VDD_WINDOW
    if not lo <= vdd_volts <= hi:
        raise DomainError(f"supply voltage {vdd_volts} V outside validity window [{lo}, {hi}]")
    if not pulse_width_ps >= c.pw_min_ps:
        raise DomainError(f"pulse width below {c.pw_min_ps:g} ps ({pulse_width_ps} ps)")
    return (
        c.comb_nominal_fit_per_mcell
        * (1.0 + (c.nominal_vdd_volts - vdd_volts))
        * (c.pw_ref_ps / pulse_width_ps)
    )


def tdr_seq(freq_hz: float, c: RateModelConstants = RateModelConstants()) -> float:
    """Sequential temporal de-rating, slack over clock period."""
    if not 0.0 <= freq_hz <= c.max_freq_hz:
        raise DomainError(f"frequency {freq_hz} Hz outside [0, {c.max_freq_hz:g}]")
    return 1.0 - freq_hz / c.max_freq_hz


def tdr_comb(pulse_width_ps: float, freq_mhz: float, mode: TdrMode = TdrMode.PAPER_COMPAT) -> float:
    """Combinational temporal de-rating, pulse width over clock period."""
    if not pulse_width_ps >= 10.0:
        raise DomainError(f"pulse width below 10 ps ({pulse_width_ps} ps)")
    if not freq_mhz >= 0.0:
        raise DomainError(f"frequency must be non-negative, got {freq_mhz} MHz")
    if mode is TdrMode.PAPER_COMPAT:
        return pulse_width_ps * freq_mhz
    # ps * MHz = 1e-6
    return min(1.0, pulse_width_ps * freq_mhz * 1.0e-6)


def seq_fail_rate(elements: Iterable[tuple[float, Sequence[float]]]) -> float:
    """Sum of raw rates times the product of their de-rating factors."""
    total = 0.0
    for i, (rate, deratings) in enumerate(elements):
        if not rate >= 0:
            raise DomainError(f"element {i}: negative raw rate {rate}")
        total += rate * math.prod(deratings)
    return total


def mem_fail_rate(memories: Iterable[DesignElement], size_scale: float = 1.0) -> float:
    """Memory failure rate: SBU rate without ECC, MBU rate with ECC, times size."""
    total = 0.0
    for m in memories:
        if not isinstance(m, DesignElement) or m.kind is not ElementKind.MEMORY:
            raise UsageError(f"mem_fail_rate expects memory elements, got {m!r}")
        rate = m.raw_mbu_fit_per_mb if m.ecc else m.raw_sbu_fit_per_mb
        total += rate * m.size_mbits * size_scale
    return total


def asic_ser(
    op: OperatingPoint,
    design: Sequence[DesignElement],
    dr: DeRating = DeRating(),
    c: RateModelConstants = RateModelConstants(),
    mode: TdrMode = TdrMode.PAPER_COMPAT,
) -> float:
    """Failure rate (FIT) of a design at one operating point.

    Logic contributions are de-rated (TDR per element kind, then LDR and
    FDR) and scaled by the environment acceleration factor; memories are
    added with their ECC-dependent rate.
    """
    if not design:
        raise ConfigurationError("design has no elements")
    scale = c.size_scale
    seq = comb = 0.0
    memories = []
    for el in design:
        if el.kind is ElementKind.SEQUENTIAL:
            seq += el.size_mbits * scale * raw_ser_seq(op.vdd_volts, c)
        elif el.kind is ElementKind.COMBINATIONAL:
            comb += el.size_mbits * scale * raw_ser_comb(op.vdd_volts, op.pulse_width_ps, c)
        else:
            memories.append(el)
    logic = 0.0
    if seq:
        logic += seq * tdr_seq(op.freq_hz, c)
    if comb:
        logic += comb * tdr_comb(op.pulse_width_ps, op.freq_mhz, mode)
    return logic * dr.ldr * dr.fdr * op.acceleration_factor + mem_fail_rate(memories, scale)


@dataclass(frozen=True)
class Design:
    """A design description as read from a design file."""

    elements: tuple[DesignElement, ...]
    derating: DeRating = DeRating()
    constants: RateModelConstants = RateModelConstants()
    pulse_widths_ps: Mapping[Environment, float] = field(
        default_factory=lambda: {e: e.default_pulse_width_ps for e in Environment}
    )
    location: str = "NYC"
    altitude_ft: float = 0.0
    alpha_multiplier: float = 1.0
    name: str = "design"

    def pulse_width(self, env: Environment) -> float:
        return self.pulse_widths_ps.get(env, env.default_pulse_width_ps)

    def acceleration(
        self,
        env: Environment,
        locations: LocationFactorTable = DEFAULT_LOCATIONS,
        altitude_mode: AltitudeMode = AltitudeMode.TABLE_INTERP,
    ) -> float:
        return acceleration_factor(
            env,
            location=self.location,
            altitude_feet=self.altitude_ft,
            locations=locations,
            mode=altitude_mode,
            alpha_multiplier=self.alpha_multiplier,
        )

    def with_mbit(self, mbit: str) -> "Design":
        if mbit == "decimal":
            cells = 1.0e6
        elif mbit == "binary":
            cells = float(2**20)
        else:
            raise ConfigurationError(f"unknown Mbit convention {mbit!r}; expected decimal or binary")
        return replace(self, constants=replace(self.constants, mbit_cells=cells))


_ELEMENT_KEYS = {"kind", "size_mbits", "ecc", "raw_sbu_fit_per_mb", "raw_mbu_fit_per_mb", "name"}
_DESIGN_KEYS = {
    "name",
    "elements",
    "derating",
    "constants",
    "pulse_width_ps",
    "location",
    "altitude_ft",
    "alpha_multiplier",
}


def _check_keys(obj: Mapping, allowed: set[str], where: str):
    if not isinstance(obj, Mapping):
        raise ConfigurationError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigurationError(f"{where}: unknown field(s) {', '.join(sorted(extra))}")


def design_from_dict(doc: Mapping) -> Design:
    """Build a :class:`Design` from its JSON document form."""
    _check_keys(doc, _DESIGN_KEYS, "design")
    raw_elements = doc.get("elements")
    if not isinstance(raw_elements, list) or not raw_elements:
        raise ConfigurationError("design: field 'elements' must be a non-empty list")
    elements = []
    for i, e in enumerate(raw_elements):
        where = f"design: elements[{i}]"
        _check_keys(e, _ELEMENT_KEYS, where)
        try:
            kind = ElementKind(str(e["kind"]).lower())
        except (KeyError, ValueError):
            raise ConfigurationError(f"{where}: field 'kind' must be sequential, combinational or memory") from None
        if "size_mbits" not in e:
            raise ConfigurationError(f"{where}: missing field 'size_mbits'")
        try:
            elements.append(
                DesignElement(
                    kind,
                    float(e["size_mbits"]),
                    bool(e.get("ecc", False)),
                    float(e.get("raw_sbu_fit_per_mb", 0.0)),
                    float(e.get("raw_mbu_fit_per_mb", 0.0)),
                    str(e.get("name", "")),
                )
            )
        except (DomainError, ConfigurationError) as exc:
            raise type(exc)(f"{where}: {exc}") from None
        except (TypeError, ValueError):
            raise ConfigurationError(f"{where}: non-numeric field") from None

    dr_doc = doc.get("derating", {})
    _check_keys(dr_doc, {"ldr", "fdr"}, "design: derating")
    derating = DeRating(**{k: float(v) for k, v in dr_doc.items()})

    c_doc = doc.get("constants", {})
    _check_keys(c_doc, set(RateModelConstants.__dataclass_fields__), "design: constants")
    constants = RateModelConstants(**{k: float(v) for k, v in c_doc.items()})

    pw_doc = doc.get("pulse_width_ps", {})
    _check_keys(pw_doc, {e.value for e in Environment}, "design: pulse_width_ps")
    pulse_widths = {e: e.default_pulse_width_ps for e in Environment}
    for key, value in pw_doc.items():
        pw = float(value)
        if not pw >= constants.pw_min_ps:
            raise DomainError(f"design: pulse_width_ps.{key}: pulse width below {constants.pw_min_ps:g} ps ({pw:g} ps)")
        pulse_widths[Environment(key)] = pw

    altitude = float(doc.get("altitude_ft", 0.0))
    if altitude < 0:
        raise DomainError("design: altitude_ft must be non-negative")
    alpha = float(doc.get("alpha_multiplier", 1.0))
    if not alpha > 0:
        raise DomainError("design: alpha_multiplier must be positive")
    return Design(
        tuple(elements),
        derating,
        constants,
        pulse_widths,
        str(doc.get("location", "NYC")),
        altitude,
        alpha,
        str(doc.get("name", "design")),
    )


def load_design(path: str | Path) -> Design:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    try:
        return design_from_dict(doc)
    except (ConfigurationError, DomainError) as exc:
        raise type(exc)(f"{path}: {exc}") from None


def demo_design() -> Design:
    """The worked-example ASIC: 1 Mbit of flip-flops and 10 Mbit of combinational cells."""
    return Design((DesignElement.sequential(1.0, "ff"), DesignElement.combinational(10.0, "logic")), name="demo-asic")
