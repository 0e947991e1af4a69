"""Dense symmetric solves for normal equations and kernel systems."""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve_triangular

from ..errors import NumericalError

# Smallest admissible pivot of the Cholesky factor relative to the largest;
# below this the system is treated as singular (condition number > 1e14).
_PIVOT_RTOL = 1e-7


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises NumericalError when ``A`` is not numerically positive definite.
    """
    A = np.asarray(A, dtype=float)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NumericalError("matrix is not positive definite") from None
    d = np.abs(np.diag(L))
    if d.size and d.min() <= _PIVOT_RTOL * d.max():
        worst = int(np.argmin(d))
        raise NumericalError(
            f"matrix is numerically singular (rank deficient at column {worst}, "
            f"pivot ratio {d.min() / d.max():.3g})"
        )
    return L


def cho_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = solve_triangular(L, b, lower=True)
    return solve_triangular(L.T, z, lower=False)


def spd_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive-definite ``A``."""
    return cho_solve(cholesky(A), b)


def solve_symmetric(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, bool]:
    """Solve ``A x = b``, falling back to pivoted LU when ``A`` is indefinite.

    Returns the solution and a flag that is True when the fallback was used.
    """
    try:
        return spd_solve(A, b), False
    except NumericalError:
        pass
    with np.errstate(all="raise"):
        try:
            lu, piv = lu_factor(A, check_finite=True)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise NumericalError(f"pivoted solve failed: {exc}") from None
    d = np.abs(np.diag(lu))
    if d.min() == 0.0 or d.min() <= 1e-14 * d.max():
        raise NumericalError("system matrix is singular")
    return lu_solve((lu, piv), b), True
