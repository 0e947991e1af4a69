"""Regression engines: linear, ridge, kernel ridge, neighbors and CART.

Every engine works on standardized features (continuous columns centred
and scaled by the training statistics, one-hot columns untouched).  The
learned state is kept in ``TrainedModel.payload`` as named numpy arrays and
scalars only, which is what the package format serializes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from ..errors import ConfigurationError, EncodingError, NumericalError, UsageError
from ..ratemodel import OperatingPoint
from ..sweep import Dataset, FeatureSchema, Standardizer
from .kernels import Kernel, kernel_matrix
from .linalg import solve_symmetric, spd_solve
from .tree import TreeArrays, grow_tree, tree_predict


class Engine(enum.Enum):
    LINEAR = "linear"
    RIDGE = "ridge"
    KERNEL_RIDGE = "kernel-ridge"
    KNEAREST = "knearest"
    RADIUS_NEIGHBORS = "radius"
    DECISION_TREE = "tree"


_ENGINE_ALIASES = {
    "kernelridge": "kernel-ridge",
    "krr": "kernel-ridge",
    "knn": "knearest",
    "k-nearest": "knearest",
    "radius-neighbors": "radius",
    "radiusneighbors": "radius",
    "decision-tree": "tree",
    "cart": "tree",
}

_KERNEL_KEYS = {
    Kernel.LINEAR: {"alpha"},
    Kernel.POLYNOMIAL: {"alpha", "degree", "gamma", "coef0"},
    Kernel.RBF: {"alpha", "gamma"},
    Kernel.SIGMOID: {"alpha", "gamma", "coef0"},
}

_ENGINE_KEYS = {
    Engine.LINEAR: set(),
    Engine.RIDGE: {"alpha"},
    Engine.KNEAREST: {"k"},
    Engine.RADIUS_NEIGHBORS: {"radius"},
    Engine.DECISION_TREE: {"max_depth", "min_samples_leaf"},
}

DEFAULTS = {"alpha": 1.0, "degree": 3, "coef0": 1.0, "k": 5, "radius": 1.0, "max_depth": None, "min_samples_leaf": 1}


@dataclass(frozen=True)
class RegressorSpec:
    engine: Engine
    kernel: Kernel | None = None
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.engine is Engine.KERNEL_RIDGE:
            if self.kernel is None:
                raise ConfigurationError("kernel ridge needs a kernel (linear, poly, rbf or sigmoid)")
            allowed = _KERNEL_KEYS[self.kernel]
        else:
            if self.kernel is not None:
                raise ConfigurationError(f"engine {self.engine.value} takes no kernel")
            allowed = _ENGINE_KEYS[self.engine]
        hp = dict(self.hyperparameters)
        extra = set(hp) - allowed
        if extra:
            raise ConfigurationError(
                f"hyperparameter(s) {', '.join(sorted(extra))} not valid for {self.label}; "
                f"accepted: {', '.join(sorted(allowed)) or 'none'}"
            )
        _validate(hp)
        object.__setattr__(self, "hyperparameters", MappingProxyType(hp))

    @property
    def label(self) -> str:
        if self.engine is Engine.KERNEL_RIDGE:
            return f"kernel-ridge-{self.kernel.value}"
        return self.engine.value

    def resolved(self, n_features: int) -> "RegressorSpec":
        """Copy with every applicable hyperparameter filled in."""
        keys = _KERNEL_KEYS[self.kernel] if self.engine is Engine.KERNEL_RIDGE else _ENGINE_KEYS[self.engine]
        hp = {}
        for key in sorted(keys):
            if key in self.hyperparameters:
                hp[key] = self.hyperparameters[key]
            elif key == "gamma":
                hp[key] = 1.0 / n_features
            else:
                hp[key] = DEFAULTS[key]
        return RegressorSpec(self.engine, self.kernel, hp)

    def to_dict(self) -> dict:
        return {
            "engine": self.engine.value,
            "kernel": self.kernel.value if self.kernel else None,
            "hyperparameters": dict(self.hyperparameters),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RegressorSpec":
        kernel = Kernel(d["kernel"]) if d.get("kernel") else None
        return cls(Engine(d["engine"]), kernel, dict(d.get("hyperparameters", {})))

    @classmethod
    def parse(cls, engine: str, kernel: str | None = None, **hyperparameters) -> "RegressorSpec":
        """Build a spec from CLI-style names, e.g. ``kernel-ridge-poly`` or ``knearest``."""
        name = engine.lower()
        name = _ENGINE_ALIASES.get(name, name)
        if name.startswith("kernel-ridge-"):
            name, suffix = "kernel-ridge", name[len("kernel-ridge-"):]
            if kernel is not None and Kernel.parse(kernel) is not Kernel.parse(suffix):
                raise ConfigurationError(f"engine {engine!r} conflicts with kernel {kernel!r}")
            kernel = suffix
        try:
            eng = Engine(name)
        except ValueError:
            names = ", ".join(e.value for e in Engine)
            raise ConfigurationError(f"unknown engine {engine!r}; expected one of {names}") from None
        k = None
        if kernel is not None:
            try:
                k = Kernel.parse(kernel)
            except ValueError as exc:
                raise ConfigurationError(str(exc)) from None
        hp = {key: v for key, v in hyperparameters.items() if v is not None}
        return cls(eng, k, hp)


def _validate(hp: Mapping[str, Any]):
    def bad(msg):
        raise ConfigurationError(msg)

    if "alpha" in hp and not float(hp["alpha"]) > 0:
        bad("alpha must be positive")
    if "gamma" in hp and not float(hp["gamma"]) > 0:
        bad("gamma must be positive")
    if "degree" in hp and (int(hp["degree"]) != hp["degree"] or hp["degree"] < 1):
        bad("degree must be an integer >= 1")
    if "k" in hp and (int(hp["k"]) != hp["k"] or hp["k"] < 1):
        bad("k must be an integer >= 1")
    if "radius" in hp and not float(hp["radius"]) > 0:
        bad("radius must be positive")
    if hp.get("max_depth") is not None and (int(hp["max_depth"]) != hp["max_depth"] or hp["max_depth"] < 0):
        bad("max_depth must be a non-negative integer")
    if "min_samples_leaf" in hp and (int(hp["min_samples_leaf"]) != hp["min_samples_leaf"] or hp["min_samples_leaf"] < 1):
        bad("min_samples_leaf must be an integer >= 1")


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A fitted engine together with its feature encoding.

    ``payload`` holds the learned numbers, ``info`` holds training notes
    (sample count, whether an indefinite kernel system needed the pivoted
    fallback).
    """

    spec: RegressorSpec
    schema: FeatureSchema
    standardizer: Standardizer
    payload: Mapping[str, Any]
    info: Mapping[str, Any] = field(default_factory=dict)

    def encode(self, point: Mapping[str, Any] | OperatingPoint | np.ndarray) -> np.ndarray:
        if isinstance(point, np.ndarray) or isinstance(point, (list, tuple)):
            x = np.asarray(point, dtype=float)
        else:
            x = self.schema.raw_vector(point)
        if x.shape[-1] != self.schema.n_features:
            raise EncodingError(f"feature vector length {x.shape[-1]} != schema width {self.schema.n_features}")
        return (x - self.standardizer.mean) / self.standardizer.scale

    def predict_encoded(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predictions for standardized rows, plus an in-support mask."""
        Z = np.atleast_2d(Z)
        p = self.payload
        engine = self.spec.engine
        support = np.ones(len(Z), dtype=bool)
        if engine in (Engine.LINEAR, Engine.RIDGE):
            return Z @ p["weights"] + p["intercept"], support
        if engine is Engine.KERNEL_RIDGE:
            hp = self.spec.hyperparameters
            K = kernel_matrix(
                self.spec.kernel, Z, p["train_x"],
                gamma=hp.get("gamma", 1.0), degree=hp.get("degree", 1), coef0=hp.get("coef0", 0.0),
            )
            return K @ p["dual"] + p["target_mean"], support
        if engine is Engine.DECISION_TREE:
            return tree_predict(tree_from_payload(p), Z), support
        return _neighbors_predict(self, Z)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Predictions for raw (unstandardized) feature rows."""
        return self.predict_encoded(self.encode(np.atleast_2d(X)))[0]

    def predict_with_support(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.predict_encoded(self.encode(np.atleast_2d(X)))


def tree_from_payload(p: Mapping[str, Any]) -> TreeArrays:
    return TreeArrays(p["feature"], p["threshold"], p["left"], p["right"], p["value"])


def _neighbors_predict(model: TrainedModel, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = model.payload
    Xt, yt = p["train_x"], p["train_y"]
    # explicit differences keep exact matches at distance 0.0 bit-for-bit
    d = np.sqrt(((Z[:, None, :] - Xt[None, :, :]) ** 2).sum(axis=2))
    out = np.empty(len(Z))
    support = np.ones(len(Z), dtype=bool)
    if model.spec.engine is Engine.KNEAREST:
        k = min(int(model.spec.hyperparameters["k"]), len(yt))
        for r, row in enumerate(d):
            nn = np.argsort(row, kind="stable")[:k]
            out[r] = _idw(row[nn], yt[nn])
    else:
        radius = float(model.spec.hyperparameters["radius"])
        for r, row in enumerate(d):
            nn = np.flatnonzero(row <= radius)
            if nn.size == 0:
                out[r] = p["target_mean"]
                support[r] = False
            else:
                out[r] = _idw(row[nn], yt[nn])
    return out, support


def _idw(dist: np.ndarray, y: np.ndarray) -> float:
    exact = dist == 0.0
    if exact.any():
        return float(y[exact].mean())
    w = 1.0 / dist
    return float(w @ y / w.sum())


def fit(spec: RegressorSpec, train: Dataset) -> TrainedModel:
    """Fit ``spec`` on ``train``; standardization statistics come from ``train``."""
    if not len(train):
        raise UsageError("cannot fit on an empty training set")
    X = train.X
    y = train.y
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericalError("training features or targets are not finite")
    schema = train.schema
    spec = spec.resolved(schema.n_features)
    std = Standardizer.fit(X, schema.continuous_mask)
    Z = std.transform(X)
    hp = spec.hyperparameters
    info: dict[str, Any] = {"n_train": len(y)}

    if spec.engine in (Engine.LINEAR, Engine.RIDGE):
        alpha = float(hp.get("alpha", 0.0))
        payload = _fit_linear(Z, y, alpha, schema.onehot_groups() if alpha == 0.0 else [])
    elif spec.engine is Engine.KERNEL_RIDGE:
        K = kernel_matrix(spec.kernel, Z, gamma=hp.get("gamma", 1.0), degree=hp.get("degree", 1), coef0=hp.get("coef0", 0.0))
        y_mean = float(y.mean())
        A = K + float(hp["alpha"]) * np.eye(len(y))
        dual, indefinite = solve_symmetric(A, y - y_mean)
        if indefinite:
            info["indefinite_kernel_system"] = True
        payload = {"train_x": Z, "dual": dual, "target_mean": y_mean}
    elif spec.engine in (Engine.KNEAREST, Engine.RADIUS_NEIGHBORS):
        payload = {"train_x": Z, "train_y": y.copy(), "target_mean": float(y.mean())}
    else:
        t = grow_tree(Z, y, hp.get("max_depth"), int(hp["min_samples_leaf"]))
        payload = {"feature": t.feature, "threshold": t.threshold, "left": t.left, "right": t.right, "value": t.value}

    for v in payload.values():
        if isinstance(v, np.ndarray):
            v.setflags(write=False)
    return TrainedModel(spec, schema, std, MappingProxyType(payload), MappingProxyType(info))


def _fit_linear(Z: np.ndarray, y: np.ndarray, alpha: float, onehot_groups: list[list[int]]) -> dict:
    """Least squares with unpenalized intercept via the normal equations.

    Without a penalty, a full one-hot block is collinear with the intercept;
    the first level of each block becomes the reference (weight 0).
    """
    n, d = Z.shape
    keep = np.ones(d, dtype=bool)
    for group in onehot_groups:
        keep[group[0]] = False
    cols = np.flatnonzero(keep)
    Zk = Z[:, cols]
    x_mean = Zk.mean(axis=0)
    y_mean = float(y.mean())
    Zc = Zk - x_mean
    A = Zc.T @ Zc + alpha * np.eye(len(cols))
    try:
        wk = spd_solve(A, Zc.T @ (y - y_mean))
    except NumericalError as exc:
        raise NumericalError(f"normal equations are singular ({exc}); features are collinear, use ridge with alpha > 0") from None
    w = np.zeros(d)
    w[cols] = wk
    return {"weights": w, "intercept": y_mean - float(x_mean @ wk)}


def predict(model: TrainedModel, point: Mapping[str, Any] | OperatingPoint | np.ndarray) -> float:
    """Single-point prediction in FIT from a raw feature vector or named values."""
    z = model.encode(point)
    p = model.payload
    if model.spec.engine in (Engine.LINEAR, Engine.RIDGE):
        return float(z @ p["weights"] + p["intercept"])
    return float(model.predict_encoded(z)[0][0])
