"""Linear regression model Y = X β⋆ + ε and the closed-form estimators around it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotReducedForm, UnequalColumnNorms
from .matrix_core import (
    as_matrix,
    as_vector,
    check_probability,
    p_rescale,
    solve_spd,
    spectral_norm,
    sym_eig,
)

__all__ = [
    "NOISE_LAWS",
    "LinearModel",
    "GramBundle",
    "gram_bundle",
    "draw_noise",
    "draw_response",
    "response_mean",
    "response_second_moment",
    "marginalized_loss",
    "marginalized_minimizer",
    "minimizer_map",
    "calibrated_minimizer",
    "weighted_ridge",
    "least_squares",
    "shrinkage_operator_norm",
    "equal_norm_spectral_form",
]

NOISE_LAWS = ("gaussian_unit", "rademacher")


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Design ``X`` (n x d), true coefficients ``beta_star`` and a unit-covariance noise law.

    Zero columns are rejected unless ``allow_zero_columns`` is set.
    """

    X: np.ndarray
    beta_star: np.ndarray
    noise: str = "gaussian_unit"
    allow_zero_columns: bool = False

    def __post_init__(self):
        X = as_matrix(self.X, "X")
        b = as_vector(self.beta_star, "beta_star", X.shape[1])
        if self.noise not in NOISE_LAWS:
            raise ValueError(f"noise must be one of {NOISE_LAWS}, got {self.noise!r}")
        if not self.allow_zero_columns and np.any(np.all(X == 0.0, axis=0)):
            raise NotReducedForm("X has a zero column")
        G = X.T @ X
        G = 0.5 * (G + G.T)
        for a in (X, b, G):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "beta_star", b)
        object.__setattr__(self, "_gram", G)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def gram(self) -> np.ndarray:
        """𝕏 = XᵀX, symmetrised once at construction."""
        return self._gram

    def with_design(self, X, beta_star=None) -> "LinearModel":
        return LinearModel(X, self.beta_star if beta_star is None else beta_star, self.noise,
                           self.allow_zero_columns)


@dataclass(frozen=True, eq=False)
class GramBundle:
    XX: np.ndarray
    XX_p: np.ndarray
    diag_XX: np.ndarray
    min_diag: float
    lam_min_XXp: float
    norm_XX: float
    p: float

    @property
    def d(self) -> int:
        return self.XX.shape[0]

    @property
    def XX_bar(self) -> np.ndarray:
        return self.XX - self.diag_XX

    @property
    def lam_min_XX(self) -> float:
        return float(sym_eig(self.XX).eigenvalues[0])


def gram_bundle(m: LinearModel | np.ndarray, p: float) -> GramBundle:
    """Gram matrix 𝕏 = XᵀX together with 𝕏_p and the scalars the bounds need."""
    p = check_probability(p)
    if isinstance(m, LinearModel):
        XX = m.gram
    else:
        X = as_matrix(m, "X")
        XX = X.T @ X
        XX = 0.5 * (XX + XX.T)
    XXp = p_rescale(XX, p)
    return GramBundle(
        XX=XX,
        XX_p=XXp,
        diag_XX=np.diag(np.diag(XX)),
        min_diag=float(np.min(np.diag(XX))),
        lam_min_XXp=float(sym_eig(XXp).eigenvalues[0]),
        norm_XX=spectral_norm(XX),
        p=p,
    )


def _require_reduced(XX: np.ndarray) -> None:
    if np.min(np.diag(XX)) <= 0.0:
        raise NotReducedForm("a diagonal entry of X^T X is zero")


def draw_noise(m: LinearModel, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    shape = (m.n,) if size is None else (size, m.n)
    if m.noise == "gaussian_unit":
        return rng.standard_normal(shape)
    return 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0


def draw_response(m: LinearModel, rng: np.random.Generator | None = None, noise_scale: float = 1.0,
                  noise=None) -> np.ndarray:
    """Y = X β⋆ + ε.  ``noise`` injects ε directly; ``noise_scale`` multiplies a fresh draw."""
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise must be given")
        eps = noise_scale * draw_noise(m, rng)
    else:
        eps = as_vector(noise, "noise", m.n)
    return m.X @ m.beta_star + eps


def response_mean(m: LinearModel) -> np.ndarray:
    return m.X @ m.beta_star


def response_second_moment(m: LinearModel) -> np.ndarray:
    """E[YYᵀ] = Xβ⋆β⋆ᵀXᵀ + I_n."""
    mu = response_mean(m)
    return np.outer(mu, mu) + np.eye(m.n)


def _check_response(m: LinearModel, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[-1] != m.n:
        raise DimensionMismatch(f"Y has trailing size {Y.shape[-1]}, expected n={m.n}")
    return Y


def marginalized_loss(m: LinearModel, Y, beta, p: float) -> float:
    """E_D‖Y − XDβ‖² written as ‖Y − pXβ‖² + p(1−p) βᵀDiag(𝕏)β."""
    p = check_probability(p)
    Y = _check_response(m, Y)
    beta = as_vector(beta, "beta", m.d)
    r = Y - p * (m.X @ beta)
    return float(r @ r + p * (1 - p) * np.sum(np.diag(m.gram) * beta * beta))


def minimizer_map(m: LinearModel, p: float) -> np.ndarray:
    """The d x n matrix 𝕏_p⁻¹Xᵀ, so that β̃ = minimizer_map @ Y."""
    g = gram_bundle(m, p)
    _require_reduced(g.XX)
    return solve_spd(g.XX_p, m.X.T)


def marginalized_minimizer(m: LinearModel, Y, p: float) -> np.ndarray:
    """β̃ = 𝕏_p⁻¹XᵀY.  ``Y`` may be a batch with responses in rows."""
    g = gram_bundle(m, p)
    _require_reduced(g.XX)
    Y = _check_response(m, Y)
    return solve_spd(g.XX_p, (Y @ m.X).T).T


def weighted_ridge(m: LinearModel, Y, lam: float) -> np.ndarray:
    """(𝕏 + λ Diag(𝕏))⁻¹XᵀY."""
    XX = m.gram
    _require_reduced(XX)
    Y = _check_response(m, Y)
    return solve_spd(XX + lam * np.diag(np.diag(XX)), (Y @ m.X).T).T


def calibrated_minimizer(m: LinearModel, Y, p: float) -> np.ndarray:
    """p·β̃, which is the weighted ridge estimator with λ = 1/p − 1."""
    return p * marginalized_minimizer(m, Y, p)


def least_squares(m: LinearModel, Y, rtol: float = 1e-12) -> np.ndarray:
    """Minimum-norm solution of the normal equations 𝕏β̂ = XᵀY."""
    Y = _check_response(m, Y)
    eig = sym_eig(m.gram)
    w, V = eig.eigenvalues, eig.eigenvectors
    cut = rtol * max(abs(w[-1]), 0.0)
    inv = np.zeros_like(w)
    keep = w > cut
    inv[keep] = 1.0 / w[keep]
    pinv = (V * inv) @ V.T
    return (Y @ m.X) @ pinv


def shrinkage_operator_norm(m: LinearModel, p: float) -> float:
    """‖X(𝕏 + (1/p − 1)Diag𝕏)⁻¹Xᵀ‖, which is < 1 in reduced form."""
    p = check_probability(p)
    XX = m.gram
    _require_reduced(XX)
    H = m.X @ solve_spd(XX + (1.0 / p - 1.0) * np.diag(np.diag(XX)), m.X.T)
    return spectral_norm(H)


def equal_norm_spectral_form(m: LinearModel, Y, p: float, tol: float = 1e-10) -> np.ndarray:
    """β̃ from the SVD of X when all columns share one norm.

    With X = Σ σ_l v_l w_lᵀ, the estimator is Σ σ_l / (pσ_l² + (1−p)𝕏₁₁) · w_l v_lᵀ Y.
    """
    p = check_probability(p)
    Y = _check_response(m, Y)
    norms2 = np.sum(m.X * m.X, axis=0)
    if np.max(np.abs(norms2 - norms2[0])) > tol * max(norms2[0], 1.0):
        raise UnequalColumnNorms("columns of X do not share a common Euclidean norm")
    _require_reduced(np.diag(norms2))
    U, s, Wt = np.linalg.svd(m.X, full_matrices=False)
    mult = s / (p * s * s + (1 - p) * norms2[0])
    return (Y @ U) * mult @ Wt
