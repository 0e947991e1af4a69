"""Parameter spaces, full-factorial sweeps, feature encoding and splitting.

The default space reconstructs the 900-row worked-example table: three
environments (outermost), 15 supply voltages from 0.8 V to 1.5 V and 20
clock frequencies from 0.1 MHz to 2.0 MHz (innermost).  Sample 0 is
(0.8 V, n, 0.1 MHz) and sample 899 is (1.5 V, HI, 2.0 MHz).
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .envflux import (
    DEFAULT_LOCATIONS,
    AltitudeMode,
    Environment,
    GeoPosition,
    GrfGrid,
    LocationFactorTable,
    acceleration_factor,
)
from .errors import ConfigurationError, EncodingError, RelcastError
from .ratemodel import Design, OperatingPoint, TdrMode, asic_ser, demo_design

__all__ = [
    "ParamKind",
    "ParameterDescriptor",
    "FeatureSchema",
    "Standardizer",
    "Sample",
    "Dataset",
    "SplitSpec",
    "XorShift64Star",
    "DEFAULT_SPACE",
    "default_space",
    "generate_grid",
    "evaluate_sweep",
    "run_sweep",
    "point_values",
    "encode_features",
    "split",
    "write_dataset_csv",
    "read_dataset_csv",
    "dataset_csv_text",
]

CSV_HEADER = ["vdd_v", "env", "freq_mhz", "location", "alt_ft", "ser_fit"]
ENV_LEVELS = tuple(e.value for e in Environment)
_DECIMALS = 12


class ParamKind(enum.Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"
    GEOGRAPHIC = "geographic"


@dataclass(frozen=True)
class ParameterDescriptor:
    """One input parameter of a model.

    Continuous parameters are given either as ``(minimum, maximum, step)``
    or as explicit ``levels``; categorical ones as a level list; geographic
    ones as a list of ``(lat, lon, altitude_ft)`` triples.
    """

    name: str
    kind: ParamKind
    units: str = ""
    levels: tuple = ()
    minimum: float | None = None
    maximum: float | None = None
    step: float | None = None

    def __post_init__(self):
        if self.kind is ParamKind.CONTINUOUS and not self.levels:
            if self.minimum is None or self.maximum is None or self.step is None:
                raise ConfigurationError(f"parameter {self.name!r}: needs levels or (min, max, step)")
            if not self.step > 0:
                raise ConfigurationError(f"parameter {self.name!r}: step must be positive")
            if self.minimum > self.maximum:
                raise ConfigurationError(f"parameter {self.name!r}: min exceeds max")
            n = int(math.floor((self.maximum - self.minimum) / self.step + 1e-9)) + 1
            levels = tuple(round(self.minimum + i * self.step, _DECIMALS) for i in range(n))
            object.__setattr__(self, "levels", levels)
        else:
            levels = tuple(tuple(map(float, v)) if self.kind is ParamKind.GEOGRAPHIC else v for v in self.levels)
            if self.kind is ParamKind.CONTINUOUS:
                levels = tuple(float(v) for v in levels)
            object.__setattr__(self, "levels", levels)
        if not self.levels:
            raise ConfigurationError(f"parameter {self.name!r}: empty level list")
        if len(set(self.levels)) != len(self.levels):
            raise ConfigurationError(f"parameter {self.name!r}: duplicate levels")
        if self.kind is ParamKind.CONTINUOUS:
            if self.minimum is None:
                object.__setattr__(self, "minimum", min(self.levels))
            if self.maximum is None:
                object.__setattr__(self, "maximum", max(self.levels))

    @classmethod
    def continuous(cls, name, minimum, maximum, step, units=""):
        return cls(name, ParamKind.CONTINUOUS, units, minimum=minimum, maximum=maximum, step=step)

    @classmethod
    def categorical(cls, name, levels, units=""):
        return cls(name, ParamKind.CATEGORICAL, units, levels=tuple(levels))

    @property
    def n_columns(self) -> int:
        if self.kind is ParamKind.CONTINUOUS:
            return 1
        if self.kind is ParamKind.CATEGORICAL:
            return len(self.levels)
        return 3

    def column_names(self) -> list[str]:
        if self.kind is ParamKind.CONTINUOUS:
            return [self.name]
        if self.kind is ParamKind.CATEGORICAL:
            return [f"{self.name}={lv}" for lv in self.levels]
        return [f"{self.name}.lat", f"{self.name}.lon", f"{self.name}.alt_ft"]

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind.value, "units": self.units}
        if self.kind is ParamKind.CONTINUOUS:
            d["levels"] = list(self.levels)
            d["minimum"] = self.minimum
            d["maximum"] = self.maximum
            if self.step is not None:
                d["step"] = self.step
        elif self.kind is ParamKind.CATEGORICAL:
            d["levels"] = list(self.levels)
        else:
            d["levels"] = [list(v) for v in self.levels]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParameterDescriptor":
        kind = ParamKind(d["kind"])
        if kind is ParamKind.CONTINUOUS:
            return cls(
                d["name"], kind, d.get("units", ""), tuple(d["levels"]),
                float(d["minimum"]), float(d["maximum"]),
                None if d.get("step") is None else float(d["step"]),
            )
        return cls(d["name"], kind, d.get("units", ""), tuple(d["levels"]))


def default_space(
    vdd=(0.8, 1.5, 0.05), freq_mhz=(0.1, 2.0, 0.1), envs: Sequence[str] = ENV_LEVELS
) -> tuple[ParameterDescriptor, ...]:
    return (
        ParameterDescriptor.categorical("env", envs),
        ParameterDescriptor.continuous("vdd_v", *vdd, units="V"),
        ParameterDescriptor.continuous("freq_mhz", *freq_mhz, units="MHz"),
    )


DEFAULT_SPACE = default_space()


def point_values(op: OperatingPoint) -> dict[str, Any]:
    """Parameter-name view of an operating point."""
    values: dict[str, Any] = {
        "env": op.env.value,
        "vdd_v": op.vdd_volts,
        "freq_mhz": op.freq_mhz,
        "location": op.location,
        "alt_ft": op.altitude_ft,
    }
    if op.position is not None:
        p = op.position
        values["position"] = (p.latitude_deg, p.longitude_deg, p.altitude_feet)
    return values


@dataclass(frozen=True)
class FeatureSchema:
    """Column layout of the raw feature vector for a parameter list."""

    params: tuple[ParameterDescriptor, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate parameter names in schema")

    @property
    def columns(self) -> list[str]:
        return [c for p in self.params for c in p.column_names()]

    @property
    def n_features(self) -> int:
        return sum(p.n_columns for p in self.params)

    @property
    def continuous_mask(self) -> np.ndarray:
        mask = []
        for p in self.params:
            mask += [p.kind is not ParamKind.CATEGORICAL] * p.n_columns
        return np.array(mask, dtype=bool)

    def onehot_groups(self) -> list[list[int]]:
        """Column indices of each categorical parameter's one-hot block."""
        groups, start = [], 0
        for p in self.params:
            if p.kind is ParamKind.CATEGORICAL:
                groups.append(list(range(start, start + p.n_columns)))
            start += p.n_columns
        return groups

    def param(self, name: str) -> ParameterDescriptor:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def raw_vector(self, values: Mapping[str, Any] | OperatingPoint) -> np.ndarray:
        """Unstandardized feature vector (continuous values, one-hot categories)."""
        if isinstance(values, OperatingPoint):
            values = point_values(values)
        out = []
        for p in self.params:
            if p.name not in values:
                raise EncodingError(f"missing parameter {p.name!r}")
            v = values[p.name]
            if p.kind is ParamKind.CONTINUOUS:
                try:
                    out.append(float(v))
                except (TypeError, ValueError):
                    raise EncodingError(f"parameter {p.name!r}: non-numeric value {v!r}") from None
            elif p.kind is ParamKind.CATEGORICAL:
                if isinstance(v, Environment):
                    v = v.value
                if v not in p.levels:
                    raise EncodingError(f"parameter {p.name!r}: unknown level {v!r}; known: {list(p.levels)}")
                out += [1.0 if v == lv else 0.0 for lv in p.levels]
            else:
                if isinstance(v, GeoPosition):
                    v = (v.latitude_deg, v.longitude_deg, v.altitude_feet)
                if len(v) != 3:
                    raise EncodingError(f"parameter {p.name!r}: expected (lat, lon, alt_ft)")
                out += [float(x) for x in v]
        return np.array(out, dtype=float)

    def to_list(self) -> list[dict]:
        return [p.to_dict() for p in self.params]

    @classmethod
    def from_list(cls, items: Iterable[Mapping]) -> "FeatureSchema":
        return cls(tuple(ParameterDescriptor.from_dict(d) for d in items))


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine map: continuous columns to zero mean, unit deviation.

    One-hot columns pass through unchanged (mean 0, scale 1).
    """

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, continuous_mask: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = np.zeros(X.shape[1])
        scale = np.ones(X.shape[1])
        if len(X):
            mean[continuous_mask] = X[:, continuous_mask].mean(axis=0)
            std = X[:, continuous_mask].std(axis=0)
            # constant columns are centred only
            scale[continuous_mask] = np.where(std > 0, std, 1.0)
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


def encode_features(
    point: Mapping[str, Any] | OperatingPoint, schema: FeatureSchema, standardizer: Standardizer | None = None
) -> np.ndarray:
    raw = schema.raw_vector(point)
    return raw if standardizer is None else standardizer.transform(raw)


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    values: Mapping[str, Any]
    target_fit: float
    point: OperatingPoint | None = None


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    samples: tuple[Sample, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        n = self.schema.n_features
        for i, s in enumerate(self.samples):
            if len(s.features) != n:
                raise ConfigurationError(f"sample {i}: feature length {len(s.features)} != schema width {n}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def X(self) -> np.ndarray:
        if not self.samples:
            return np.empty((0, self.schema.n_features))
        return np.vstack([s.features for s in self.samples])

    @property
    def y(self) -> np.ndarray:
        return np.array([s.target_fit for s in self.samples], dtype=float)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self.schema, tuple(self.samples[i] for i in indices))


def generate_grid(
    space: Sequence[ParameterDescriptor] = DEFAULT_SPACE,
    design: Design | None = None,
    *,
    locations: LocationFactorTable = DEFAULT_LOCATIONS,
    grf_grid: GrfGrid | None = None,
    altitude_mode: AltitudeMode = AltitudeMode.TABLE_INTERP,
) -> list[OperatingPoint]:
    """Full Cartesian product of ``space`` in lexicographic order (first parameter outermost).

    Recognized parameter names: ``env``, ``vdd_v``, ``freq_mhz``,
    ``location``, ``alt_ft`` and ``position`` (geographic).  Parameters not
    in the space are taken from ``design``.
    """
    if not space:
        raise ConfigurationError("parameter space is empty")
    design = design or demo_design()
    known = {"env", "vdd_v", "freq_mhz", "location", "alt_ft", "position"}
    for p in space:
        if p.name not in known:
            raise ConfigurationError(f"unsupported sweep parameter {p.name!r}")
        if not p.levels:
            raise ConfigurationError(f"parameter {p.name!r}: empty level list")

    points = []
    for combo in itertools.product(*(p.levels for p in space)):
        v = dict(zip((p.name for p in space), combo))
        env = Environment.parse(v.get("env", "n")) if not isinstance(v.get("env"), Environment) else v["env"]
        vdd = v.get("vdd_v", design.constants.nominal_vdd_volts)
        freq = v.get("freq_mhz", 0.0)
        position = GeoPosition(*v["position"]) if "position" in v else None
        if env is Environment.NEUTRON:
            if position is not None:
                location = "geo"
                alt = position.altitude_feet
                af = acceleration_factor(
                    env, position=position, grf_grid=grf_grid, mode=altitude_mode, locations=locations
                )
            else:
                location = v.get("location", design.location)
                alt = float(v.get("alt_ft", design.altitude_ft))
                af = acceleration_factor(
                    env, location=location, altitude_feet=alt, locations=locations, mode=altitude_mode
                )
        else:
            location, alt = "N/A", 0.0
            af = acceleration_factor(env, alpha_multiplier=design.alpha_multiplier)
        points.append(
            OperatingPoint(vdd, freq, env, design.pulse_width(env), af, location, alt, position)
        )
    return points


def _schema_for(space: Sequence[ParameterDescriptor] | None) -> FeatureSchema:
    return FeatureSchema(tuple(space) if space else DEFAULT_SPACE)


def evaluate_sweep(
    points: Sequence[OperatingPoint],
    design: Design | None = None,
    mode: TdrMode = TdrMode.PAPER_COMPAT,
    space: Sequence[ParameterDescriptor] | None = None,
    workers: int = 1,
) -> Dataset:
    """Evaluate the design's failure rate at every point, preserving order."""
    design = design or demo_design()
    schema = _schema_for(space)

    def one(item):
        i, op = item
        try:
            target = asic_ser(op, design.elements, design.derating, design.constants, mode)
            return Sample(schema.raw_vector(op), point_values(op), target, op)
        except RelcastError as exc:
            raise type(exc)(f"point {i}: {exc}") from None

    items = list(enumerate(points))
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(one, items))
    else:
        samples = [one(it) for it in items]
    return Dataset(schema, tuple(samples))


def run_sweep(
    design: Design | None = None,
    space: Sequence[ParameterDescriptor] = DEFAULT_SPACE,
    mode: TdrMode = TdrMode.PAPER_COMPAT,
    **grid_kw,
) -> Dataset:
    design = design or demo_design()
    return evaluate_sweep(generate_grid(space, design, **grid_kw), design, mode, space)


class XorShift64Star:
    """xorshift64* generator seeded through splitmix64.

    Update rule: ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27``; output
    ``x * 0x2545F4914F6CDD1D mod 2**64``.  The initial state is the first
    splitmix64 output for ``seed`` (never zero).
    """

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        z = (seed + 0x9E3779B97F4A7C15) & self.MASK
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        z ^= z >> 31
        self.state = z or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & self.MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & self.MASK

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of ``range(n)``, swapping from the top down."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError(f"train fraction must lie in (0, 1), got {self.train_fraction}")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")

    def train_size(self, n: int) -> int:
        return int(math.floor(self.train_fraction * n + 0.5))


def split_indices(n: int, spec: SplitSpec = SplitSpec()) -> tuple[list[int], list[int]]:
    perm = XorShift64Star(spec.seed).permutation(n)
    k = spec.train_size(n)
    return perm[:k], perm[k:]


def split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first ``round(fraction * N)`` samples train."""
    if not len(dataset):
        raise ConfigurationError("cannot split an empty dataset")
    train_idx, test_idx = split_indices(len(dataset), spec)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def _fmt(x: float) -> str:
    return repr(float(x))


def dataset_csv_text(dataset: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in dataset.samples:
        v = s.values
        w.writerow(
            [
                _fmt(v["vdd_v"]),
                v["env"],
                _fmt(v["freq_mhz"]),
                v.get("location", "N/A"),
                _fmt(v.get("alt_ft", 0.0)),
                _fmt(s.target_fit),
            ]
        )
    return buf.getvalue()


def write_dataset_csv(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dataset_csv_text(dataset), encoding="utf-8")


def read_dataset_csv(path: str | Path) -> Dataset:
    """Read a dataset CSV; location and altitude become features only when they vary."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ConfigurationError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        rows = []
        for n, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(CSV_HEADER):
                raise ConfigurationError(f"{path}:{n}: expected {len(CSV_HEADER)} fields, got {len(rec)}")
            try:
                vdd, env, freq, loc, alt, ser = rec
                if env not in ENV_LEVELS:
                    raise ConfigurationError(f"{path}:{n}: field env: unknown environment {env!r}")
                rows.append(
                    {
                        "vdd_v": float(vdd),
                        "env": env,
                        "freq_mhz": float(freq),
                        "location": loc,
                        "alt_ft": float(alt),
                        "_target": float(ser),
                    }
                )
            except ValueError as exc:
                if isinstance(exc, ConfigurationError):
                    raise
                raise ConfigurationError(f"{path}:{n}: non-numeric field") from None
    if not rows:
        raise ConfigurationError(f"{path}: dataset has no rows")

    envs = [e for e in ENV_LEVELS if any(r["env"] == e for r in rows)]
    space = [
        ParameterDescriptor.categorical("env", envs),
        ParameterDescriptor("vdd_v", ParamKind.CONTINUOUS, "V", tuple(sorted({r["vdd_v"] for r in rows}))),
        ParameterDescriptor("freq_mhz", ParamKind.CONTINUOUS, "MHz", tuple(sorted({r["freq_mhz"] for r in rows}))),
    ]
    # site only matters for neutron rows; other environments carry "N/A"
    site_rows = [r for r in rows if r["env"] == Environment.NEUTRON.value]
    locs = sorted({r["location"] for r in site_rows})
    if len(locs) > 1:
        levels = locs + (["N/A"] if len(site_rows) < len(rows) and "N/A" not in locs else [])
        space.append(ParameterDescriptor.categorical("location", levels))
    alts = sorted({r["alt_ft"] for r in rows})
    if len({r["alt_ft"] for r in site_rows}) > 1:
        space.append(ParameterDescriptor("alt_ft", ParamKind.CONTINUOUS, "ft", tuple(alts)))
    schema = FeatureSchema(tuple(space))
    samples = []
    for r in rows:
        target = r.pop("_target")
        samples.append(Sample(schema.raw_vector(r), r, target))
    return Dataset(schema, tuple(samples))


def location_label(values: Mapping[str, Any]) -> str:
    """Human label in the style of the published table, e.g. ``NYC, sea-level``."""
    loc = values.get("location", "N/A")
    if loc == "N/A":
        return loc
    alt = float(values.get("alt_ft", 0.0))
    return f"{loc}, sea-level" if alt == 0 else f"{loc}, {alt:g} ft"
