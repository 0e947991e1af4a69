"""Kernel functions on row-stacked feature matrices."""

from __future__ import annotations

import enum

import numpy as np


class Kernel(enum.Enum):
    LINEAR = "linear"
    POLYNOMIAL = "poly"
    RBF = "rbf"
    SIGMOID = "sigmoid"

    @classmethod
    def parse(cls, text: str) -> "Kernel":
        aliases = {"polynomial": "poly", "gaussian": "rbf", "linear": "linear", "lin": "linear"}
        key = aliases.get(text.lower(), text.lower())
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown kernel {text!r}; expected linear, poly, rbf or sigmoid") from None


def squared_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    xx = np.einsum("ij,ij->i", X, X)[:, None]
    yy = np.einsum("ij,ij->i", Y, Y)[None, :]
    d2 = xx + yy - 2.0 * X @ Y.T
    np.maximum(d2, 0.0, out=d2)
    return d2


def kernel_matrix(
    kernel: Kernel, X: np.ndarray, Y: np.ndarray | None = None, *, gamma: float, degree: int, coef0: float
) -> np.ndarray:
    """Gram matrix ``K[i, j] = k(X[i], Y[j])``; ``Y`` defaults to ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    symmetric = Y is None
    Y = X if symmetric else np.atleast_2d(np.asarray(Y, dtype=float))
    if kernel is Kernel.RBF:
        K = np.exp(-gamma * squared_distances(X, Y))
        if symmetric:
            np.fill_diagonal(K, 1.0)
    else:
        G = X @ Y.T
        if kernel is Kernel.LINEAR:
            K = G
        elif kernel is Kernel.POLYNOMIAL:
            K = (gamma * G + coef0) ** degree
        else:
            K = np.tanh(gamma * G + coef0)
    if symmetric:
        # BLAS may round X @ X.T asymmetrically
        K = 0.5 * (K + K.T)
    return K
