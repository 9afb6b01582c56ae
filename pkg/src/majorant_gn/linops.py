"""Dense linear-operator kernel.

Operators are plain 2-D float ndarrays. Norms are Euclidean on vectors and
spectral (largest singular value) on operators.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotSquare, PerturbationTooLarge, RankDeficient

__all__ = [
    "InjectivityReport",
    "as_operator",
    "adjoint",
    "injectivity",
    "pseudoinverse",
    "operator_norm",
    "cond",
    "perturbation_bounds",
]

#: relative injectivity threshold, multiplied by ``operator_norm(A)``
DEFAULT_RTOL = 1e-12


@dataclass(frozen=True)
class InjectivityReport:
    smallest_singular_value: float
    is_injective: bool
    tolerance_used: float


def as_operator(A):
    """Validate ``A`` as a finite 2-D real matrix and return it as float array."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"operator must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("operator has non-finite entries")
    return A


def adjoint(A):
    """Adjoint of a real operator (its transpose)."""
    return as_operator(A).T.copy()


def _default_tol(s):
    return DEFAULT_RTOL * (s[0] if s.size else 0.0)


def injectivity(A, tol=None):
    """Decide whether ``A`` has full column rank.

    Parameters
    ----------
    A : array_like, shape (m, n)
    tol : float, optional
        Absolute threshold on the smallest singular value. Defaults to
        ``1e-12 * ||A||``.
    """
    A = as_operator(A)
    s = np.linalg.svd(A, compute_uv=False)
    smin = float(s[-1]) if A.shape[0] >= A.shape[1] else 0.0
    if tol is None:
        tol = _default_tol(s)
    tol = float(tol)
    if tol <= 0.0:
        # zero operator: any positive tolerance rejects it
        tol = np.finfo(float).tiny
    return InjectivityReport(smin, smin > tol, tol)


def pseudoinverse(A, tol=None):
    """Moore-Penrose inverse of an injective operator.

    Computed from the thin SVD, never from ``(A^T A)^{-1} A^T``.

    Raises
    ------
    RankDeficient
        If the smallest singular value is ``<= tol``.
    """
    A = as_operator(A)
    m, n = A.shape
    if m < n:
        raise RankDeficient(f"{m}x{n} operator cannot be injective")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if tol is None:
        tol = _default_tol(s)
    if not s[-1] > tol:
        raise RankDeficient(
            f"smallest singular value {s[-1]:.3e} <= tolerance {tol:.3e}"
        )
    return (Vt.T / s) @ U.T


def operator_norm(A):
    """Spectral norm (largest singular value)."""
    A = as_operator(A)
    return float(np.linalg.svd(A, compute_uv=False)[0])


def cond(A):
    """Spectral condition number of a square operator.

    Returns ``inf`` when the operator is singular to working precision.
    """
    A = as_operator(A)
    if A.shape[0] != A.shape[1]:
        raise NotSquare(f"cond needs a square operator, got shape {A.shape}")
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= s[0] * A.shape[0] * np.finfo(float).eps:
        return np.inf
    return float(s[0] / s[-1])


def perturbation_bounds(A, E, tol=None):
    """Stewart-Wedin bounds for the pseudoinverse of ``B = A + E``.

    Returns ``(bound_norm, bound_diff)`` with

        ||B^+||       <= ||A^+|| / (1 - ||A^+|| ||E||)
        ||B^+ - A^+|| <= sqrt(2) ||A^+||^2 ||E|| / (1 - ||A^+|| ||E||)
    """
    A = as_operator(A)
    E = as_operator(E)
    if A.shape != E.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {E.shape}")
    a = operator_norm(pseudoinverse(A, tol))
    e = operator_norm(E)
    q = a * e
    if q >= 1.0:
        raise PerturbationTooLarge(f"||A^+|| ||E|| = {q:.6g} >= 1")
    return a / (1.0 - q), np.sqrt(2.0) * a * a * e / (1.0 - q)
