"""Dense numeric kernels shared by the simulator and the feasibility engine.

All kernels are deterministic, so seeded simulations are reproducible on a
given build. The matrix exponential is scaling-and-squaring with a degree-13
Pade approximant (scipy's expm); eigensolves use LAPACK's symmetric drivers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import NoConvergenceError, NonFiniteError

__all__ = ["SymMatrix", "expm_apply", "eig_sym", "psd_project", "lstsq"]


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric matrix stored as its packed upper triangle (row-major).

    Symmetry is structural: only one triangle is kept, so a SymMatrix can
    never drift out of symmetry.
    """

    dim: int
    packed: np.ndarray  # length dim*(dim+1)//2

    @classmethod
    def from_full(cls, S: np.ndarray, tol: float = 1e-8) -> "SymMatrix":
        S = np.asarray(S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {S.shape}")
        scale = max(1.0, float(np.max(np.abs(S))) if S.size else 1.0)
        if np.max(np.abs(S - S.T)) > tol * scale:
            raise ValueError("matrix is not symmetric within tolerance")
        d = S.shape[0]
        iu = np.triu_indices(d)
        return cls(dim=d, packed=S[iu].copy())

    @property
    def full(self) -> np.ndarray:
        d = self.dim
        S = np.zeros((d, d))
        iu = np.triu_indices(d)
        S[iu] = self.packed
        S.T[iu] = self.packed
        return S


def _as_sym_array(S) -> np.ndarray:
    if isinstance(S, SymMatrix):
        return S.full
    A = np.asarray(S, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if np.max(np.abs(A - A.T)) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return A


def _require_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("input contains NaN or Inf")


def expm_apply(A: np.ndarray, t: float, v: np.ndarray) -> np.ndarray:
    """Return ``exp(A*t) @ v``.

    Parameters
    ----------
    A : (n, n) array
        Generator of the flow.
    t : float
        Duration, must be finite and >= 0.
    v : (n,) array
        Vector to propagate.
    """
    A = np.asarray(A, dtype=float)
    v = np.asarray(v, dtype=float)
    _require_finite(A, v)
    if not np.isfinite(t) or t < 0:
        raise ValueError(f"duration must be finite and nonnegative, got {t}")
    if t == 0.0:
        return v.copy()
    return scipy.linalg.expm(A * t) @ v


def eig_sym(S) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues ascending, orthonormal eigenvectors as columns),
    so that ``S == V @ diag(w) @ V.T`` up to roundoff.
    """
    A = _as_sym_array(S)
    _require_finite(A)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # iteration cap exceeded
        raise NoConvergenceError(str(exc)) from exc
    return w, V


def psd_project(S) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix to ``S``.

    Clips negative eigenvalues to zero and recomposes.
    """
    A = _as_sym_array(S)
    w, V = eig_sym(A)
    w_plus = np.clip(w, 0.0, None)
    P = (V * w_plus) @ V.T
    return 0.5 * (P + P.T)


class LstsqResult(NamedTuple):
    solution: np.ndarray
    residual: float


def lstsq(M: np.ndarray, b: np.ndarray) -> LstsqResult:
    """Minimum-norm least-squares solution of ``M x = b``.

    Returns the minimizer of ``||M x - b||`` (the minimum-norm one when M is
    rank deficient) together with the residual norm.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    _require_finite(M, b)
    x, _, _, _ = np.linalg.lstsq(M, b, rcond=None)
    residual = float(np.linalg.norm(M @ x - b))
    return LstsqResult(solution=x, residual=residual)
