"""Dense matrix helpers: diagonal/off-diagonal split, p-rescaling, spectra.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  Every function
returns a fresh array and never mutates its inputs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidProbability,
    NoConvergence,
    NotPositiveDefinite,
    NotSymmetric,
)

__all__ = [
    "SymEig",
    "NeumannResult",
    "as_matrix",
    "as_vector",
    "as_square",
    "check_probability",
    "check_symmetric",
    "diag_part",
    "overline",
    "p_rescale",
    "hadamard",
    "spectral_norm",
    "sym_eig",
    "jacobi_eigh",
    "solve_spd",
    "neumann_apply_inverse",
    "read_matrix_csv",
    "write_matrix_csv",
]


def as_matrix(A, name: str = "A") -> np.ndarray:
    """Return a float64 copy of ``A`` after checking it is 2-D and finite."""
    M = np.array(A, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] == 0 or M.shape[1] == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def as_vector(v, name: str = "v", length: int | None = None) -> np.ndarray:
    x = np.array(v, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 1-D array, got shape {x.shape}")
    if length is not None and x.size != length:
        raise DimensionMismatch(f"{name} has length {x.size}, expected {length}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def as_square(A, name: str = "A") -> np.ndarray:
    M = as_matrix(A, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    return M


def check_probability(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise InvalidProbability(f"p must lie strictly between 0 and 1, got {p}")
    return p


def check_symmetric(A, name: str = "A", rtol: float = 1e-12) -> np.ndarray:
    M = as_square(A, name)
    scale = max(float(np.max(np.abs(M))), 1.0)
    if np.max(np.abs(M - M.T)) > rtol * scale:
        raise NotSymmetric(f"{name} is not symmetric within relative tolerance {rtol}")
    return M


def diag_part(A) -> np.ndarray:
    """Diag(A): keep the main diagonal, zero elsewhere."""
    M = as_square(A)
    return np.diag(np.diag(M))


def overline(A) -> np.ndarray:
    """A with its main diagonal set to exactly zero."""
    M = as_square(A)
    np.fill_diagonal(M, 0.0)
    return M


def p_rescale(A, p: float) -> np.ndarray:
    """A_p = p*A + (1-p)*Diag(A): off-diagonal entries scaled by p."""
    p = check_probability(p)
    M = as_square(A)
    out = p * M
    np.fill_diagonal(out, np.diag(M))
    return out


def hadamard(A, B) -> np.ndarray:
    M, N = as_matrix(A, "A"), as_matrix(B, "B")
    if M.shape != N.shape:
        raise DimensionMismatch(f"shapes differ: {M.shape} vs {N.shape}")
    return M * N


@dataclass(frozen=True)
class SymEig:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def jacobi_eigh(A, tol: float = 1e-15, max_sweeps: int = 100) -> SymEig:
    """Cyclic Jacobi rotations for a symmetric matrix.

    Slow compared to LAPACK but entirely self-contained, which makes it a
    useful independent cross-check.
    """
    M = check_symmetric(A)
    M = 0.5 * (M + M.T)
    d = M.shape[0]
    V = np.eye(d)
    scale = np.sqrt(np.sum(M * M))
    if scale == 0.0:
        return SymEig(np.zeros(d), V)
    for _ in range(max_sweeps):
        O = M - np.diag(M.diagonal())
        off = np.sqrt(np.sum(O * O))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = M[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (M[q, q] - M[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # θ² would overflow; t ≈ 1/(2θ)
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = M[:, p].copy(), M[:, q].copy()
                M[:, p] = c * cp - s * cq
                M[:, q] = s * cp + c * cq
                rp, rq = M[p, :].copy(), M[q, :].copy()
                M[p, :] = c * rp - s * rq
                M[q, :] = s * rp + c * rq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(M).copy()
    order = np.argsort(w, kind="stable")
    return SymEig(w[order], V[:, order])


def sym_eig(A, method: str = "lapack", rtol: float = 1e-12) -> SymEig:
    """Full spectral decomposition of a symmetric matrix.

    ``method="lapack"`` uses ``numpy.linalg.eigh``; ``method="jacobi"`` uses
    the in-house cyclic Jacobi solver.
    """
    M = check_symmetric(A, rtol=rtol)
    M = 0.5 * (M + M.T)
    if method == "jacobi":
        return jacobi_eigh(M)
    if method != "lapack":
        raise ValueError(f"unknown eigen method {method!r}")
    w, V = np.linalg.eigh(M)
    return SymEig(w, V)


def spectral_norm(A, method: str = "lapack") -> float:
    """Largest singular value, via the top eigenvalue of A^T A."""
    M = as_matrix(A)
    if not np.any(M):
        return 0.0
    G = M.T @ M
    lam = sym_eig(0.5 * (G + G.T), method=method).eigenvalues[-1]
    return float(np.sqrt(max(lam, 0.0)))


def solve_spd(A, b) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A by Cholesky."""
    M = check_symmetric(A)
    rhs = np.array(b, dtype=np.float64)
    if rhs.shape[0] != M.shape[0]:
        raise DimensionMismatch(f"right-hand side has {rhs.shape[0]} rows, matrix has {M.shape[0]}")
    try:
        L = np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


@dataclass(frozen=True)
class NeumannResult:
    value: np.ndarray
    terms: int


def neumann_apply_inverse(
    op: Callable[[np.ndarray], np.ndarray],
    B,
    tol: float = 1e-14,
    max_terms: int = 1_000_000,
) -> NeumannResult:
    """Partial sum of B + op(B) + op(op(B)) + ... approximating (id - op)^{-1} B.

    Stops once the newest term has spectral norm <= tol.  ``terms`` counts
    applications of ``op``, so the zero operator gives ``terms == 1``.
    """
    term = as_matrix(B, "B")
    total = term.copy()
    n = 0
    while spectral_norm(term) > tol:
        if n >= max_terms:
            raise NoConvergence(f"Neumann series not below tol={tol} after {max_terms} terms")
        term = op(term)
        total = total + term
        n += 1
    return NeumannResult(total, n)


def read_matrix_csv(path) -> np.ndarray:
    """Read a headerless CSV of decimal floats, one matrix row per line."""
    with open(Path(path), newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DimensionMismatch(f"ragged rows in {path}")
    return as_matrix(rows, str(path))


def write_matrix_csv(A, path) -> None:
    M = as_matrix(A)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        for row in M:
            w.writerow([repr(float(x)) for x in row])
