"""Gradient-descent iterate recursions with and without dropout.

Step functions accept a single iterate of shape (d,) or a batch of shape
(R, d) together with matching responses and masks, so that an ensemble of
replicas advances in one vectorised update.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dropout_algebra import stream_generator
from .errors import DimensionMismatch, StepSizeViolation, TheoremGateWarning
from .matrix_core import as_vector, check_probability, overline
from .model import LinearModel, gram_bundle, least_squares, marginalized_minimizer

__all__ = [
    "SCHEMES",
    "SchemeConfig",
    "Trajectory",
    "VarDecomposition",
    "checkpoint_ladder",
    "check_step_size",
    "mask_width",
    "draw_masks",
    "anchor_estimate",
    "step_plain",
    "step_dropout",
    "step_simplified",
    "step_minibatch",
    "step",
    "simulate_batch",
    "run_trajectory",
    "var_decompose",
    "write_trajectories_csv",
]

SCHEMES = ("plain_gd", "dropout", "simplified_dropout", "minibatch_dropout")

# Stream keys below a replica index: masks and noise never share a stream.
MASK_STREAM = 0
NOISE_STREAM = 1


def checkpoint_ladder(k_max: int) -> list[int]:
    """1, 2, 5, 10, 20, 50, ... up to k_max, with k_max itself appended."""
    if k_max <= 0:
        return [0]
    out, base = [], 1
    while base <= k_max:
        out.extend(c for c in (base, 2 * base, 5 * base) if c <= k_max)
        base *= 10
    if out[-1] != k_max:
        out.append(k_max)
    return out


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str
    alpha: float
    p: float = 0.5
    k_max: int = 100
    init: tuple | None = None
    seed: int = 0
    checkpoints: tuple | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.alpha > 0:
            raise StepSizeViolation(f"alpha must be positive, got {self.alpha}")
        check_probability(self.p)
        if int(self.k_max) != self.k_max or self.k_max < 0:
            raise ValueError(f"k_max must be a non-negative integer, got {self.k_max}")
        cps = checkpoint_ladder(self.k_max) if self.checkpoints is None else sorted(set(int(c) for c in self.checkpoints))
        if cps and (cps[0] < 0 or cps[-1] > self.k_max):
            raise ValueError(f"checkpoints must lie in [0, {self.k_max}]")
        object.__setattr__(self, "checkpoints", tuple(cps))
        if self.init is not None:
            object.__setattr__(self, "init", tuple(float(x) for x in self.init))

    def initial(self, d: int) -> np.ndarray:
        if self.init is None:
            return np.zeros(d)
        return as_vector(self.init, "init", d)


def check_step_size(m: LinearModel, cfg: SchemeConfig) -> list[str]:
    """Enforce the hard step-size gate; return warnings for the theorem-level gate."""
    g = gram_bundle(m, cfg.p)
    if cfg.scheme == "plain_gd":
        if cfg.alpha * g.norm_XX >= 1.0:
            raise StepSizeViolation(f"alpha*||XX|| = {cfg.alpha * g.norm_XX:.6g} >= 1")
        return []
    if cfg.alpha * cfg.p * g.norm_XX >= 1.0:
        raise StepSizeViolation(f"alpha*p*||XX|| = {cfg.alpha * cfg.p * g.norm_XX:.6g} >= 1")
    notes = []
    if cfg.scheme == "dropout" and g.min_diag > 0:
        gate = g.lam_min_XXp / (3.0 * g.norm_XX**2)
        if not cfg.alpha < gate:
            msg = f"alpha={cfg.alpha:.6g} fails the covariance-theorem gate alpha < {gate:.6g}"
            warnings.warn(msg, TheoremGateWarning, stacklevel=3)
            notes.append(msg)
    return notes


def mask_width(m: LinearModel, scheme: str) -> int:
    return m.n if scheme == "minibatch_dropout" else m.d


def draw_masks(seed: int, replica: int, k: int, width: int, p: float) -> np.ndarray:
    """The k masks of one replica, one row per iteration."""
    rng = stream_generator(seed, replica, MASK_STREAM)
    return (rng.random((k, width)) < p).astype(np.float64)


def anchor_estimate(m: LinearModel, Y, scheme: str, p: float) -> np.ndarray:
    """β̃ for dropout and minibatch dropout, β̂ (minimum norm) otherwise."""
    if scheme in ("dropout", "minibatch_dropout"):
        return marginalized_minimizer(m, Y, p)
    return least_squares(m, Y)


def _dims(m: LinearModel, Y, beta, mask=None, width=None):
    Y, beta = np.asarray(Y, dtype=np.float64), np.asarray(beta, dtype=np.float64)
    if Y.shape[-1] != m.n or beta.shape[-1] != m.d:
        raise DimensionMismatch(f"need Y[..., {m.n}] and beta[..., {m.d}], got {Y.shape}, {beta.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape[-1] != width:
            raise DimensionMismatch(f"mask has trailing size {mask.shape[-1]}, expected {width}")
    return Y, beta, mask


# The parameter-space schemes are evaluated in Gram form, XᵀY − 𝕏(·).  When 𝕏
# is exactly diagonal this makes dropout and simplified dropout produce
# bitwise identical iterates under the same masks.


def step_plain(m: LinearModel, Y, beta, alpha: float) -> np.ndarray:
    """β + αXᵀ(Y − Xβ)."""
    Y, beta, _ = _dims(m, Y, beta)
    return beta + alpha * (Y @ m.X - beta @ m.gram)


def step_dropout(m: LinearModel, Y, beta, alpha: float, mask) -> np.ndarray:
    """β + αDXᵀ(Y − XDβ)."""
    Y, beta, mask = _dims(m, Y, beta, mask, m.d)
    return beta + alpha * mask * (Y @ m.X - (mask * beta) @ m.gram)


def step_simplified(m: LinearModel, Y, beta, alpha: float, mask) -> np.ndarray:
    """β + αDXᵀ(Y − Xβ)."""
    Y, beta, mask = _dims(m, Y, beta, mask, m.d)
    return beta + alpha * mask * (Y @ m.X - beta @ m.gram)


def step_minibatch(m: LinearModel, Y, beta, alpha: float, row_mask) -> np.ndarray:
    """β + αXᵀD_n(Y − Xβ) with D_n masking observations."""
    Y, beta, row_mask = _dims(m, Y, beta, row_mask, m.n)
    r = row_mask * (Y - beta @ m.X.T)
    return beta + alpha * (r @ m.X)


def _step_gram(scheme, m, XtY, beta, alpha, mask, Y):
    """Batch step with XᵀY precomputed."""
    XX = m.gram
    if scheme == "plain_gd":
        return beta + alpha * (XtY - beta @ XX)
    if scheme == "dropout":
        return beta + alpha * mask * (XtY - (mask * beta) @ XX)
    if scheme == "simplified_dropout":
        return beta + alpha * mask * (XtY - beta @ XX)
    return beta + alpha * ((mask * (Y - beta @ m.X.T)) @ m.X)


def step(scheme: str, m: LinearModel, Y, beta, alpha: float, mask) -> np.ndarray:
    if scheme == "plain_gd":
        return step_plain(m, Y, beta, alpha)
    if scheme == "dropout":
        return step_dropout(m, Y, beta, alpha, mask)
    if scheme == "simplified_dropout":
        return step_simplified(m, Y, beta, alpha, mask)
    if scheme == "minibatch_dropout":
        return step_minibatch(m, Y, beta, alpha, mask)
    raise ValueError(f"unknown scheme {scheme!r}")


def simulate_batch(m: LinearModel, Y: np.ndarray, cfg: SchemeConfig, masks: np.ndarray, init=None):
    """Advance R replicas together.

    ``Y`` has shape (R, n) and ``masks`` shape (R, k_max, width).  Returns
    ``(iterates, averages)``, each of shape (len(checkpoints), R, d).  The
    running average at k is the mean of iterates 1..k; at k = 0 it is β₀.
    """
    Y, _, _ = _dims(m, Y, np.zeros(m.d))
    if cfg.k_max and masks.shape[:2] != (Y.shape[0], cfg.k_max):
        raise DimensionMismatch(f"masks must have shape (R, k_max, width), got {masks.shape}")
    R = Y.shape[0]
    XtY = Y @ m.X
    beta = np.broadcast_to(cfg.initial(m.d) if init is None else init, (R, m.d)).astype(np.float64)
    total = np.zeros_like(beta)
    cps = cfg.checkpoints
    its = np.empty((len(cps), R, m.d))
    avgs = np.empty_like(its)
    j = 0
    if cps and cps[0] == 0:
        its[0], avgs[0] = beta, beta
        j = 1
    for k in range(1, cfg.k_max + 1):
        if j >= len(cps):
            break
        beta = _step_gram(cfg.scheme, m, XtY, beta, cfg.alpha, masks[:, k - 1], Y)
        total = total + beta
        if k == cps[j]:
            its[j], avgs[j] = beta, total / k
            j += 1
    return its, avgs


@dataclass
class Trajectory:
    scheme: SchemeConfig
    response: np.ndarray
    checkpoints: tuple
    iterates: list
    rp_averages: list
    anchor: np.ndarray
    replica: int = 0
    warnings: list = field(default_factory=list)


def run_trajectory(m: LinearModel, Y, cfg: SchemeConfig, replica: int = 0) -> Trajectory:
    """Run one replica; masks come from the (seed, replica) stream in iteration order."""
    notes = check_step_size(m, cfg)
    Y = as_vector(Y, "Y", m.n)
    masks = draw_masks(cfg.seed, replica, cfg.k_max, mask_width(m, cfg.scheme), cfg.p)
    its, avgs = simulate_batch(m, Y[None, :], cfg, masks[None])
    return Trajectory(
        scheme=cfg,
        response=Y,
        checkpoints=cfg.checkpoints,
        iterates=[x[0] for x in its],
        rp_averages=[x[0] for x in avgs],
        anchor=anchor_estimate(m, Y, cfg.scheme, cfg.p),
        replica=replica,
        warnings=notes,
    )


@dataclass(frozen=True)
class VarDecomposition:
    G: np.ndarray
    xi: np.ndarray
    beta_tilde: np.ndarray


def var_decompose(m: LinearModel, Y, p: float, alpha: float, beta_prev, mask) -> VarDecomposition:
    """G = I − αD𝕏D and ξ = αD𝕏̄(pI − D)β̃, so that Z_k = G Z_{k−1} + ξ."""
    Y = as_vector(Y, "Y", m.n)
    as_vector(beta_prev, "beta_prev", m.d)
    mask = as_vector(mask, "mask", m.d)
    bt = marginalized_minimizer(m, Y, p)
    D = np.diag(mask)
    XX = m.gram
    G = np.eye(m.d) - alpha * D @ XX @ D
    xi = alpha * D @ overline(XX) @ (p * np.eye(m.d) - D) @ bt
    return VarDecomposition(G, xi, bt)


def write_trajectories_csv(trajectories, path) -> None:
    """Columns: replica, k, coord, value, rp_value."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica", "k", "coord", "value", "rp_value"])
        for t in trajectories:
            for k, it, avg in zip(t.checkpoints, t.iterates, t.rp_averages):
                for i, (v, a) in enumerate(zip(it, avg)):
                    w.writerow([t.replica, k, i, repr(float(v)), repr(float(a))])
