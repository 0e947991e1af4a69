"""Single-event environment models: neutron flux, altitude and location factors.

Neutron flux at a location follows the JEDEC-style attenuation law

    NF = NF_ref * GRF * exp(-(A - A_ref) / L)

where the atmospheric areal density ``A`` (g/cm^2) is a cubic-exponential fit
in altitude expressed in thousands of feet.  Tabulated relative fluxes for a
few altitudes and locations are shipped as defaults; geomagnetic rigidity
factor (GRF) grids are user supplied and bilinearly interpolated.

Every function here is pure.  Tables are frozen dataclasses.
"""

from __future__ import annotations

import bisect
import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, UnknownLocationError

__all__ = [
    "Environment",
    "GeoPosition",
    "NeutronConstants",
    "GrfGrid",
    "LocationFactorTable",
    "AltitudeTable",
    "AltitudeMode",
    "DEFAULT_ALTITUDE_TABLE",
    "DEFAULT_LOCATIONS",
    "MAX_ALTITUDE_FT",
    "areal_density",
    "neutron_flux",
    "altitude_factor",
    "location_factor",
    "grf_at",
    "bilinear",
    "acceleration_factor",
    "load_grf_grid",
    "load_location_table",
]

MAX_ALTITUDE_FT = 60000.0
MIN_PULSE_WIDTH_PS = 10.0


class Environment(enum.Enum):
    """Radiation environment with its typical transient pulse width (ps)."""

    NEUTRON = "n"
    ALPHA = "alpha"
    HEAVY_ION = "HI"

    @property
    def default_pulse_width_ps(self) -> float:
        return _PULSE_WIDTH_PS[self]

    @classmethod
    def parse(cls, text: str) -> "Environment":
        key = text.strip()
        for env in cls:
            if key == env.value or key.lower() in (env.name.lower(), env.name.lower().replace("_", "")):
                return env
        raise ConfigurationError(f"unknown environment {text!r}; expected one of n, alpha, HI")


_PULSE_WIDTH_PS = {
    Environment.NEUTRON: 50.0,
    Environment.ALPHA: 10.0,
    Environment.HEAVY_ION: 100.0,
}


@dataclass(frozen=True)
class GeoPosition:
    latitude_deg: float = 0.0
    longitude_deg: float = 0.0
    altitude_feet: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise DomainError(f"latitude {self.latitude_deg} outside [-90, 90]")
        if not -180.0 <= self.longitude_deg < 180.0:
            raise DomainError(f"longitude {self.longitude_deg} outside [-180, 180)")
        if not self.altitude_feet >= 0.0:
            raise DomainError(f"altitude {self.altitude_feet} ft is negative")


@dataclass(frozen=True)
class NeutronConstants:
    """Reference flux (New York, sea level), attenuation length and reference areal density."""

    flux_ref_per_cm2_h: float = 14.0
    attenuation_length_g_cm2: float = 148.0
    areal_density_ref_g_cm2: float = 1033.0

    def __post_init__(self):
        for name in ("flux_ref_per_cm2_h", "attenuation_length_g_cm2", "areal_density_ref_g_cm2"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be strictly positive")


class AltitudeMode(enum.Enum):
    ANALYTICAL = "analytical"
    TABLE_INTERP = "table"


@dataclass(frozen=True)
class AltitudeTable:
    """Relative neutron flux versus altitude (feet), normalized to sea level."""

    entries: tuple[tuple[float, float], ...]

    def __post_init__(self):
        entries = tuple((float(a), float(f)) for a, f in self.entries)
        if not entries:
            raise ConfigurationError("altitude table is empty")
        object.__setattr__(self, "entries", entries)
        if entries[0] != (0.0, 1.0):
            raise ConfigurationError("altitude table must start at (0 ft, 1.0)")
        for (a0, f0), (a1, f1) in zip(entries, entries[1:]):
            if not a1 > a0:
                raise ConfigurationError("altitude table altitudes must strictly increase")
            if not f1 > f0:
                raise ConfigurationError("altitude table relative flux must strictly increase")

    @property
    def altitudes(self) -> list[float]:
        return [a for a, _ in self.entries]

    @property
    def factors(self) -> list[float]:
        return [f for _, f in self.entries]


# Relative-to-sea-level neutron flux (JEDEC flux calculator, New York).
DEFAULT_ALTITUDE_TABLE = AltitudeTable(
    (
        (0, 1.0),
        (1000, 1.3),
        (2000, 1.7),
        (5000, 3.4),
        (10000, 9.6),
        (20000, 47.8),
        (30000, 142.9),
        (35000, 213.8),
        (40000, 296.2),
    )
)


@dataclass(frozen=True)
class LocationFactorTable:
    entries: Mapping[str, float]

    def __post_init__(self):
        clean = {}
        for name, factor in dict(self.entries).items():
            factor = float(factor)
            if not factor > 0 or not math.isfinite(factor):
                raise ConfigurationError(f"location factor for {name!r} must be positive, got {factor}")
            clean[str(name)] = factor
        object.__setattr__(self, "entries", MappingProxyType(clean))

    def names(self) -> list[str]:
        return list(self.entries)

    def merged(self, other: "LocationFactorTable") -> "LocationFactorTable":
        return LocationFactorTable({**self.entries, **other.entries})


DEFAULT_LOCATIONS = LocationFactorTable(
    {
        "NYC": 1.0,
        "Milpitas": 0.92,
        "Colorado Springs": 4.42,
        "Bangalore": 1.02,
        "Beijing": 0.72,
        "Grenoble, France": 1.24,
    }
)


@dataclass(frozen=True)
class GrfGrid:
    """Rectangular latitude/longitude grid of geomagnetic rigidity factors.

    ``values[i, j]`` is the factor at ``latitudes[i]``, ``longitudes[j]``.
    When the longitude nodes span the full circle at uniform spacing, the
    cell between the last and the first longitude wraps across +/-180.
    """

    latitudes: tuple[float, ...]
    longitudes: tuple[float, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        lats, lons = self.latitudes, self.longitudes
        if values.shape != (len(lats), len(lons)):
            raise ConfigurationError("GRF value array does not match the grid axes")
        if len(lats) < 2 or len(lons) < 2:
            raise ConfigurationError("GRF grid needs at least two latitudes and two longitudes")
        if any(b <= a for a, b in zip(lats, lats[1:])) or any(b <= a for a, b in zip(lons, lons[1:])):
            raise ConfigurationError("GRF grid axes must be strictly increasing")
        if not np.all(np.isfinite(values)) or not np.all(values > 0):
            raise ConfigurationError("GRF values must be finite and positive")

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[float, float, float]]) -> "GrfGrid":
        table: dict[tuple[float, float], float] = {}
        for lat, lon, grf in rows:
            key = (float(lat), float(lon))
            if key in table:
                raise ConfigurationError(f"duplicate GRF node at lat={key[0]}, lon={key[1]}")
            table[key] = float(grf)
        lats = sorted({k[0] for k in table})
        lons = sorted({k[1] for k in table})
        missing = [(a, o) for a in lats for o in lons if (a, o) not in table]
        if missing:
            a, o = missing[0]
            raise ConfigurationError(
                f"GRF grid is not rectangular: {len(missing)} missing cell(s), first at lat={a}, lon={o}"
            )
        values = np.array([[table[(a, o)] for o in lons] for a in lats])
        return cls(tuple(lats), tuple(lons), values)

    @property
    def wraps(self) -> bool:
        lons = np.asarray(self.longitudes)
        steps = np.diff(lons)
        return bool(np.allclose(steps, steps[0]) and math.isclose(steps[0] * len(lons), 360.0))


def areal_density(altitude_feet: float) -> float:
    """Atmospheric areal density (g/cm^2) above ``altitude_feet``."""
    if not 0.0 <= altitude_feet <= MAX_ALTITUDE_FT:
        raise DomainError(f"altitude {altitude_feet} ft outside [0, {MAX_ALTITUDE_FT:g}]")
    k = altitude_feet / 1000.0
    return 1033.0 * math.exp(-0.03813 * k - 0.00014 * k**2 + 6.4e-7 * k**3)


def neutron_flux(
    position: GeoPosition, grf: float = 1.0, constants: NeutronConstants = NeutronConstants()
) -> float:
    """Neutron flux in n/cm^2/h at ``position`` for the given rigidity factor."""
    if not grf > 0:
        raise DomainError(f"GRF must be positive, got {grf}")
    a = areal_density(position.altitude_feet)
    return (
        constants.flux_ref_per_cm2_h
        * grf
        * math.exp(-(a - constants.areal_density_ref_g_cm2) / constants.attenuation_length_g_cm2)
    )


def altitude_factor(
    altitude_feet: float,
    table: AltitudeTable = DEFAULT_ALTITUDE_TABLE,
    mode: AltitudeMode = AltitudeMode.TABLE_INTERP,
    constants: NeutronConstants = NeutronConstants(),
) -> float:
    """Neutron flux at ``altitude_feet`` relative to sea level.

    ``TABLE_INTERP`` interpolates the altitude table piecewise-linearly and
    refuses to extrapolate; ``ANALYTICAL`` uses the areal-density law.
    """
    if mode is AltitudeMode.ANALYTICAL:
        a = areal_density(altitude_feet)
        return math.exp((constants.areal_density_ref_g_cm2 - a) / constants.attenuation_length_g_cm2)
    alts = table.altitudes
    if not alts[0] <= altitude_feet <= alts[-1]:
        raise DomainError(f"altitude {altitude_feet} ft outside table span [{alts[0]:g}, {alts[-1]:g}]")
    i = bisect.bisect_left(alts, altitude_feet)
    if alts[i] == altitude_feet:
        return table.factors[i]
    a0, a1 = alts[i - 1], alts[i]
    f0, f1 = table.factors[i - 1], table.factors[i]
    return f0 + (f1 - f0) * (altitude_feet - a0) / (a1 - a0)


def location_factor(name: str, table: LocationFactorTable = DEFAULT_LOCATIONS) -> float:
    try:
        return table.entries[name]
    except KeyError:
        raise UnknownLocationError(name, table.names()) from None


def _bracket(axis: Sequence[float], x: float) -> tuple[int, float]:
    """Cell index and fractional offset of ``x`` on ``axis`` (x inside span)."""
    i = bisect.bisect_right(axis, x) - 1
    i = min(max(i, 0), len(axis) - 2)
    return i, (x - axis[i]) / (axis[i + 1] - axis[i])


def grf_at(position: GeoPosition, grid: GrfGrid) -> float:
    """Bilinear interpolation of the GRF grid at ``position``; no extrapolation."""
    lats, lons = grid.latitudes, grid.longitudes
    lat, lon = position.latitude_deg, position.longitude_deg
    if not lats[0] <= lat <= lats[-1]:
        raise DomainError(f"latitude {lat} outside GRF grid [{lats[0]}, {lats[-1]}]")
    i, t = _bracket(lats, lat)

    if lons[0] <= lon <= lons[-1]:
        j, u = _bracket(lons, lon)
        j1 = j + 1
    elif grid.wraps:
        # wrap cell between the last node and the first node shifted by 360
        lo = lons[-1]
        span = lons[0] + 360.0 - lo
        j, j1 = len(lons) - 1, 0
        u = ((lon - lo) % 360.0) / span
    else:
        raise DomainError(f"longitude {lon} outside GRF grid [{lons[0]}, {lons[-1]}]")

    v = grid.values
    return bilinear(v[i, j], v[i, j1], v[i + 1, j], v[i + 1, j1], t, u)


def bilinear(v00: float, v01: float, v10: float, v11: float, t: float, u: float) -> float:
    """Interpolate a unit cell; ``t`` runs along the first index, ``u`` along the second."""
    return float((1 - t) * (1 - u) * v00 + (1 - t) * u * v01 + t * (1 - u) * v10 + t * u * v11)


def acceleration_factor(
    env: Environment,
    *,
    location: str | None = None,
    position: GeoPosition | None = None,
    altitude_feet: float | None = None,
    locations: LocationFactorTable = DEFAULT_LOCATIONS,
    grf_grid: GrfGrid | None = None,
    altitude_table: AltitudeTable = DEFAULT_ALTITUDE_TABLE,
    mode: AltitudeMode = AltitudeMode.TABLE_INTERP,
    alpha_multiplier: float = 1.0,
) -> float:
    """Environment acceleration factor relative to the New York sea-level reference.

    Neutron: location factor (named lookup, or GRF interpolated at
    ``position``) times the altitude factor.  Heavy ions are location
    independent (factor 1).  Alpha uses ``alpha_multiplier`` directly, since
    package emissivity is a property of the product, not of the site.
    """
    if env is Environment.HEAVY_ION:
        return 1.0
    if env is Environment.ALPHA:
        if not alpha_multiplier > 0:
            raise DomainError(f"alpha multiplier must be positive, got {alpha_multiplier}")
        return float(alpha_multiplier)

    if location is not None:
        loc = location_factor(location, locations)
    elif position is not None:
        if grf_grid is None:
            raise ConfigurationError("neutron environment at a geographic position needs a GRF grid")
        loc = grf_at(position, grf_grid)
    else:
        raise ConfigurationError("neutron environment needs a named location or a geographic position")

    if altitude_feet is None:
        if position is None:
            raise ConfigurationError("neutron environment needs an altitude")
        altitude_feet = position.altitude_feet
    return loc * altitude_factor(altitude_feet, altitude_table, mode)


def _read_csv(path: str | Path, header: list[str]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != header:
            raise ConfigurationError(f"{path}: expected header {','.join(header)}, got {reader.fieldnames}")
        return list(reader)


def load_grf_grid(path: str | Path) -> GrfGrid:
    """Load a ``lat_deg,lon_deg,grf`` CSV into a rectangular GRF grid."""
    rows = []
    for n, rec in enumerate(_read_csv(path, ["lat_deg", "lon_deg", "grf"]), start=2):
        try:
            rows.append((float(rec["lat_deg"]), float(rec["lon_deg"]), float(rec["grf"])))
        except (TypeError, ValueError):
            raise ConfigurationError(f"{path}:{n}: non-numeric GRF row") from None
    if not rows:
        raise ConfigurationError(f"{path}: GRF grid is empty")
    return GrfGrid.from_rows(rows)


def load_location_table(path: str | Path, base: LocationFactorTable | None = DEFAULT_LOCATIONS) -> LocationFactorTable:
    """Load a ``name,factor`` CSV; entries override ``base`` when it is given."""
    entries = {}
    for n, rec in enumerate(_read_csv(path, ["name", "factor"]), start=2):
        try:
            entries[rec["name"].strip()] = float(rec["factor"])
        except (TypeError, ValueError):
            raise ConfigurationError(f"{path}:{n}: non-numeric location factor") from None
    table = LocationFactorTable(entries)
    return base.merged(table) if base is not None else table
