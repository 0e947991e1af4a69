"""Portable compact-model packages and hierarchical composition.

A package is a canonical JSON document with exactly these top-level keys::

    format_version, name, provider, created_at, parameter_space,
    engine, payload, metrics, content_digest

The payload holds only numeric arrays (feature standardization and the
engine's learned state).  Nothing in a package names the rate equations,
raw technology rates or the design structure that produced the training
data; ``lint`` enforces this with a key whitelist and a forbidden-term scan.

``content_digest`` is the SHA-256 of the canonical serialization of every
other field, so any edit to the file is detected on load.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import CompositionError, EncodingError, IntegrityError, SchemaError, UsageError, VersionError
from .regress.engines import Engine, RegressorSpec, TrainedModel, fit
from .regress.metrics import MetricsReport, metrics
from .sweep import Dataset, FeatureSchema, ParameterDescriptor, ParamKind, Sample, Standardizer

__all__ = [
    "FORMAT_VERSION",
    "SUPPORTED_VERSIONS",
    "PackageMetadata",
    "CompactModelPackage",
    "CompositionPlan",
    "make_package",
    "save",
    "load",
    "read_package",
    "write_package",
    "lint",
    "compose",
    "predict_checked",
]

FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)

TOP_LEVEL_KEYS = frozenset(
    {"format_version", "name", "provider", "created_at", "parameter_space", "engine", "payload", "metrics", "content_digest"}
)

# every key that may appear anywhere in a package document
KEY_WHITELIST = TOP_LEVEL_KEYS | {
    # parameter descriptors
    "name", "kind", "units", "levels", "minimum", "maximum", "step",
    # engine
    "engine", "kernel", "hyperparameters", "alpha", "degree", "gamma", "coef0", "k", "radius",
    "max_depth", "min_samples_leaf",
    # payload
    "mean", "scale", "weights", "intercept", "train_x", "train_y", "dual", "target_mean",
    "feature", "threshold", "left", "right", "value",
    # metrics
    "train", "test", "mae", "max", "rmse", "ev", "r2", "n",
}

FORBIDDEN_TERMS = (
    "RawSER", "raw_ser", "LDR", "FDR", "TDR", "derating", "de-rating", "100 FIT", "FIT/M",
    "size_mbits", "raw_sbu", "raw_mbu", "pulse_width", "sequential", "combinational",
)

_PAYLOAD_ARRAYS = {
    Engine.LINEAR: {"weights": float},
    Engine.RIDGE: {"weights": float},
    Engine.KERNEL_RIDGE: {"train_x": float, "dual": float},
    Engine.KNEAREST: {"train_x": float, "train_y": float},
    Engine.RADIUS_NEIGHBORS: {"train_x": float, "train_y": float},
    Engine.DECISION_TREE: {"feature": np.int64, "threshold": float, "left": np.int64, "right": np.int64, "value": float},
}
_PAYLOAD_SCALARS = {
    Engine.LINEAR: ("intercept",),
    Engine.RIDGE: ("intercept",),
    Engine.KERNEL_RIDGE: ("target_mean",),
    Engine.KNEAREST: ("target_mean",),
    Engine.RADIUS_NEIGHBORS: ("target_mean",),
    Engine.DECISION_TREE: (),
}


def _default_created_at() -> str:
    # reproducible builds: honour SOURCE_DATE_EPOCH, else the epoch
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class PackageMetadata:
    name: str
    provider: str = ""
    created_at: str = field(default_factory=_default_created_at)
    train_metrics: MetricsReport | None = None
    test_metrics: MetricsReport | None = None


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode("utf-8")


def _digest(doc: Mapping[str, Any]) -> str:
    body = {k: v for k, v in doc.items() if k != "content_digest"}
    return hashlib.sha256(canonical_json(body)).hexdigest()


def _metric_doc(m: MetricsReport) -> dict:
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in m.as_dict().items()}


def _metric_from_doc(d: Mapping) -> MetricsReport:
    return MetricsReport.from_dict({k: (math.nan if v is None else v) for k, v in d.items()})


@dataclass(frozen=True, eq=False)
class CompactModelPackage:
    format_version: int
    name: str
    provider: str
    created_at: str
    model: TrainedModel
    metrics: Mapping[str, MetricsReport]
    content_digest: str

    @property
    def parameter_space(self) -> tuple[ParameterDescriptor, ...]:
        return self.model.schema.params

    @property
    def parameter_names(self) -> list[str]:
        return [p.name for p in self.parameter_space]

    def to_document(self) -> dict:
        return _document(self.model, self.name, self.provider, self.created_at, self.metrics)

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_document()) + b"\n"

    def predict(self, point: Mapping[str, Any]) -> float:
        return predict_checked(self, point)[0]

    def predict_many(self, rows: Iterable[Mapping[str, Any]]) -> np.ndarray:
        X = np.vstack([self.model.schema.raw_vector(r) for r in rows])
        return self.model.predict(X)

    def in_validity(self, point: Mapping[str, Any]) -> bool:
        return all(_within(p, point[p.name]) for p in self.parameter_space)


def _within(p: ParameterDescriptor, value: Any) -> bool:
    if p.kind is ParamKind.CONTINUOUS:
        v = float(value)
        tol = 1e-9 * max(1.0, abs(p.minimum), abs(p.maximum))
        return p.minimum - tol <= v <= p.maximum + tol
    if p.kind is ParamKind.CATEGORICAL:
        return value in p.levels
    lat, lon, alt = map(float, value)
    lats, lons, alts = zip(*p.levels)
    return min(lats) <= lat <= max(lats) and min(lons) <= lon <= max(lons) and min(alts) <= alt <= max(alts)


def _payload_doc(model: TrainedModel) -> dict:
    doc = {"mean": model.standardizer.mean.tolist(), "scale": model.standardizer.scale.tolist()}
    for key, value in model.payload.items():
        doc[key] = value.tolist() if isinstance(value, np.ndarray) else float(value)
    return doc


def _document(model, name, provider, created_at, metrics_map) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "name": name,
        "provider": provider,
        "created_at": created_at,
        "parameter_space": model.schema.to_list(),
        "engine": model.spec.to_dict(),
        "payload": _payload_doc(model),
        "metrics": {k: _metric_doc(v) for k, v in metrics_map.items()},
    }
    doc["content_digest"] = _digest(doc)
    return doc


def lint(doc_or_bytes: Mapping | bytes) -> list[str]:
    """Obfuscation lint: keys outside the whitelist and forbidden terms in the text."""
    if isinstance(doc_or_bytes, (bytes, bytearray)):
        text = bytes(doc_or_bytes).decode("utf-8")
        doc = json.loads(text)
    else:
        doc = doc_or_bytes
        text = canonical_json(doc).decode("utf-8")
    problems = []

    def walk(node, path):
        if isinstance(node, dict):
            for k, v in node.items():
                if k not in KEY_WHITELIST:
                    problems.append(f"key {path}{k!r} is not in the package schema")
                walk(v, f"{path}{k}.")
        elif isinstance(node, list):
            for v in node:
                if isinstance(v, (dict, list)):
                    walk(v, path)

    walk(doc, "")
    for term in FORBIDDEN_TERMS:
        if term in text:
            problems.append(f"forbidden term {term!r} present in package text")
    return problems


def make_package(model: TrainedModel, metadata: PackageMetadata) -> CompactModelPackage:
    metrics_map = {}
    if metadata.train_metrics is not None:
        metrics_map["train"] = metadata.train_metrics
    if metadata.test_metrics is not None:
        metrics_map["test"] = metadata.test_metrics
    doc = _document(model, metadata.name, metadata.provider, metadata.created_at, metrics_map)
    problems = lint(doc)
    if problems:
        raise SchemaError("package fails the obfuscation lint: " + "; ".join(problems))
    return CompactModelPackage(
        FORMAT_VERSION, metadata.name, metadata.provider, metadata.created_at, model, metrics_map, doc["content_digest"]
    )


def save(model: TrainedModel, metadata: PackageMetadata) -> bytes:
    """Serialize ``model`` into package bytes (lossless, deterministic)."""
    return make_package(model, metadata).to_bytes()


def _array(doc: Mapping, key: str, dtype) -> np.ndarray:
    try:
        arr = np.array(doc[key], dtype=dtype)
    except KeyError:
        raise SchemaError(f"payload is missing {key!r}") from None
    except (TypeError, ValueError):
        raise SchemaError(f"payload field {key!r} is not a numeric array") from None
    if dtype is float and not np.all(np.isfinite(arr)):
        raise SchemaError(f"payload field {key!r} has non-finite values")
    arr.setflags(write=False)
    return arr


def load(data: bytes) -> CompactModelPackage:
    """Parse and validate package bytes.

    Raises SchemaError for malformed containers, VersionError for
    unsupported format versions and IntegrityError on digest mismatch.
    """
    try:
        doc = json.loads(bytes(data).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"package is not a well-formed JSON document ({exc})") from None
    if not isinstance(doc, dict):
        raise SchemaError("package root must be an object")
    keys = set(doc)
    if keys != TOP_LEVEL_KEYS:
        missing, extra = TOP_LEVEL_KEYS - keys, keys - TOP_LEVEL_KEYS
        raise SchemaError(f"package keys mismatch (missing: {sorted(missing)}, unexpected: {sorted(extra)})")
    version = doc["format_version"]
    if version not in SUPPORTED_VERSIONS:
        raise VersionError(
            f"unsupported package format_version {version!r}; supported versions: {list(SUPPORTED_VERSIONS)}"
        )
    if not isinstance(doc["content_digest"], str) or doc["content_digest"] != _digest(doc):
        raise IntegrityError("package content digest mismatch (file modified or corrupted)")
    problems = lint(doc)
    if problems:
        raise SchemaError("; ".join(problems))

    try:
        schema = FeatureSchema.from_list(doc["parameter_space"])
        spec = RegressorSpec.from_dict(doc["engine"])
        payload_doc = doc["payload"]
        std = Standardizer(_array(payload_doc, "mean", float), _array(payload_doc, "scale", float))
        payload: dict[str, Any] = {k: _array(payload_doc, k, t) for k, t in _PAYLOAD_ARRAYS[spec.engine].items()}
        for k in _PAYLOAD_SCALARS[spec.engine]:
            if not isinstance(payload_doc.get(k), (int, float)):
                raise SchemaError(f"payload scalar {k!r} missing or not numeric")
            payload[k] = float(payload_doc[k])
        metrics_map = {k: _metric_from_doc(v) for k, v in doc["metrics"].items()}
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise SchemaError(f"package content is malformed ({exc!r})") from None

    _check_shapes(spec, schema, std, payload)
    model = TrainedModel(spec, schema, std, payload, {"n_train": _n_rows(spec, payload)})
    return CompactModelPackage(
        version, str(doc["name"]), str(doc["provider"]), str(doc["created_at"]), model, metrics_map, doc["content_digest"]
    )


def _n_rows(spec, payload) -> int:
    return len(payload["train_x"]) if "train_x" in payload else 0


def _check_shapes(spec: RegressorSpec, schema: FeatureSchema, std: Standardizer, payload: Mapping[str, Any]):
    d = schema.n_features
    if std.mean.shape != (d,) or std.scale.shape != (d,):
        raise SchemaError("standardization arrays do not match the parameter space")
    if spec.engine in (Engine.LINEAR, Engine.RIDGE) and payload["weights"].shape != (d,):
        raise SchemaError("weight vector does not match the parameter space")
    if "train_x" in payload:
        X = payload["train_x"]
        if X.ndim != 2 or X.shape[1] != d or len(X) == 0:
            raise SchemaError("stored training features do not match the parameter space")
        other = payload.get("dual", payload.get("train_y"))
        if other.shape != (len(X),):
            raise SchemaError("stored coefficients do not match the stored training features")
    if spec.engine is Engine.DECISION_TREE:
        n = len(payload["feature"])
        arrays = [payload[k] for k in ("threshold", "left", "right", "value")]
        if n == 0 or any(a.shape != (n,) for a in arrays):
            raise SchemaError("tree arrays are inconsistent")
        feat, left, right = payload["feature"], payload["left"], payload["right"]
        internal = feat >= 0
        if np.any(feat >= d) or np.any(feat < -1):
            raise SchemaError("tree split feature out of range")
        kids = np.concatenate([left[internal], right[internal]])
        if np.any(kids <= 0) or np.any(kids >= n) or len(set(kids.tolist())) != len(kids) or len(kids) != n - 1:
            raise SchemaError("tree node links do not form a binary tree")


def read_package(path) -> CompactModelPackage:
    with open(path, "rb") as fh:
        return load(fh.read())


def write_package(pkg_or_bytes, path) -> None:
    data = pkg_or_bytes.to_bytes() if isinstance(pkg_or_bytes, CompactModelPackage) else pkg_or_bytes
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def predict_checked(pkg: CompactModelPackage, point: Mapping[str, Any]) -> tuple[float, bool]:
    """Prediction plus a flag that is False when any parameter lies outside its validity range.

    The prediction is returned even when extrapolating.
    """
    missing = [n for n in pkg.parameter_names if n not in point]
    if missing:
        raise UsageError(f"point is missing parameter(s): {', '.join(missing)}")
    for p in pkg.parameter_space:
        if p.kind is ParamKind.CATEGORICAL and point[p.name] not in p.levels:
            raise EncodingError(f"parameter {p.name!r}: unknown level {point[p.name]!r}; known: {list(p.levels)}")
    x = pkg.model.schema.raw_vector(point)
    value = float(pkg.model.predict(x)[0])
    return value, pkg.in_validity(point)


# ---------------------------------------------------------------- composition


@dataclass(frozen=True)
class CompositionPlan:
    """Inputs plus a map from ``<model>.<param>`` to a unified parameter name.

    With ``unify=None`` parameters sharing a name across inputs are unified
    under that name.  Unmapped parameters stay namespaced as
    ``<model>.<param>``.  Aggregation is a sum.
    """

    inputs: tuple[CompactModelPackage, ...]
    unify: Mapping[str, str] | None = None
    aggregation: str = "sum"

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if not self.inputs:
            raise CompositionError("composition needs at least one input model")
        names = [p.name for p in self.inputs]
        if len(set(names)) != len(names):
            raise CompositionError(f"input model names must be unique, got {names}")
        if self.aggregation != "sum":
            raise CompositionError(f"unsupported aggregation {self.aggregation!r}")

    def mapping(self) -> dict[str, str]:
        """Full map ``<model>.<param>`` -> unified name for every input parameter."""
        counts: dict[str, int] = {}
        for pkg in self.inputs:
            for n in pkg.parameter_names:
                counts[n] = counts.get(n, 0) + 1
        out = {}
        for pkg in self.inputs:
            for n in pkg.parameter_names:
                key = f"{pkg.name}.{n}"
                if self.unify is not None:
                    out[key] = self.unify.get(key, key)
                else:
                    out[key] = n if counts[n] > 1 or len(self.inputs) == 1 else key
        return out


def _unify_descriptors(name: str, members: list[tuple[str, ParameterDescriptor]]) -> ParameterDescriptor:
    kinds = {p.kind for _, p in members}
    units = {p.units for _, p in members}
    if len(kinds) > 1:
        raise CompositionError(f"parameter {name!r}: incompatible kinds {sorted(k.value for k in kinds)}")
    if len(units) > 1:
        raise CompositionError(f"parameter {name!r}: incompatible units {sorted(units)}")
    kind = kinds.pop()
    unit = units.pop()
    if kind is ParamKind.CONTINUOUS:
        lo = max(p.minimum for _, p in members)
        hi = min(p.maximum for _, p in members)
        if lo > hi:
            ranges = ", ".join(f"{src}: [{p.minimum:g}, {p.maximum:g}]" for src, p in members)
            raise CompositionError(f"parameter {name!r}: empty validity intersection ({ranges})")
        return ParameterDescriptor(name, kind, unit, (lo, hi) if lo < hi else (lo,), lo, hi)
    common = [lv for lv in members[0][1].levels if all(lv in p.levels for _, p in members[1:])]
    if not common:
        ranges = ", ".join(f"{src}: {list(p.levels)}" for src, p in members)
        raise CompositionError(f"parameter {name!r}: no common levels ({ranges})")
    return ParameterDescriptor(name, kind, unit, tuple(common))


def _grid_levels(p: ParameterDescriptor, density: int, midpoints: bool = False) -> tuple:
    if p.kind is not ParamKind.CONTINUOUS:
        return p.levels
    if p.minimum == p.maximum:
        return (p.minimum,)
    edges = np.linspace(p.minimum, p.maximum, density)
    if midpoints:
        edges = 0.5 * (edges[1:] + edges[:-1])
    return tuple(float(v) for v in edges)


def _sweep(space, plan, mapping, levels_of) -> Dataset:
    schema = FeatureSchema(tuple(ParameterDescriptor(p.name, p.kind, p.units, levels_of(p), p.minimum, p.maximum)
                                 if p.kind is ParamKind.CONTINUOUS else p for p in space))
    combos = list(itertools.product(*(levels_of(p) for p in space)))
    rows = [dict(zip((p.name for p in space), c)) for c in combos]
    total = np.zeros(len(rows))
    for pkg in plan.inputs:
        local = [{n: r[mapping[f"{pkg.name}.{n}"]] for n in pkg.parameter_names} for r in rows]
        total += pkg.predict_many(local)
    samples = tuple(Sample(schema.raw_vector(r), r, float(t)) for r, t in zip(rows, total))
    return Dataset(schema, samples)


def unified_space(plan: CompositionPlan) -> list[ParameterDescriptor]:
    mapping = plan.mapping()
    groups: dict[str, list[tuple[str, ParameterDescriptor]]] = {}
    for pkg in plan.inputs:
        for p in pkg.parameter_space:
            key = f"{pkg.name}.{p.name}"
            groups.setdefault(mapping[key], []).append((key, p))
    return [_unify_descriptors(name, members) for name, members in groups.items()]


def compose(
    plan: CompositionPlan,
    spec: RegressorSpec,
    density: int = 10,
    name: str = "composed",
    provider: str = "",
    created_at: str | None = None,
) -> CompactModelPackage:
    """Sum the input models over their unified validity space and train one model on the result.

    ``density`` levels are taken per continuous unified parameter; all
    categorical levels are kept.  The recorded ``train`` metrics are on the
    composition grid, ``test`` metrics on the grid's cell midpoints.
    """
    if density < 2:
        raise CompositionError("composition grid density must be at least 2")
    space = unified_space(plan)
    mapping = plan.mapping()
    train = _sweep(space, plan, mapping, lambda p: _grid_levels(p, density))
    model = fit(spec, train)
    train_m = metrics(train.y, model.predict(train.X))
    if any(p.kind is ParamKind.CONTINUOUS and p.minimum < p.maximum for p in space):
        check = _sweep(space, plan, mapping, lambda p: _grid_levels(p, density, midpoints=True))
        test_m = metrics(check.y, model.predict(check.X))
    else:
        test_m = train_m
    meta = PackageMetadata(name, provider, created_at or _default_created_at(), train_m, test_m)
    return make_package(model, meta)
