"""Bernoulli dropout masks and closed-form moments of the dropout matrix D.

D is diagonal with i.i.d. Bernoulli(p) entries.  The closed forms below are
checked against :func:`enumerate_mask_expectation`, which sums over all 2^d
masks explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BudgetExceeded, DimensionMismatch
from .matrix_core import (
    as_square,
    as_vector,
    check_probability,
    check_symmetric,
    overline,
    p_rescale,
)

__all__ = [
    "MAX_ENUMERATION_DIM",
    "DropoutLaw",
    "MaskSampler",
    "stream_generator",
    "sample_mask",
    "all_masks",
    "mask_weights",
    "enumerate_mask_expectation",
    "e_dad",
    "e_dadbd",
    "e_dadbdcd",
    "dropout_update_cov",
]

MAX_ENUMERATION_DIM = 20


@dataclass(frozen=True)
class DropoutLaw:
    p: float
    d: int

    def __post_init__(self):
        check_probability(self.p)
        if int(self.d) != self.d or self.d < 1:
            raise DimensionMismatch(f"d must be a positive integer, got {self.d}")


def stream_generator(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for the stream addressed by ``(seed, *stream)``.

    ``SeedSequence`` hashes the seed together with the stream key, so
    neighbouring replica indices give unrelated counter-based streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class MaskSampler:
    """Single-owner sampler of 0/1 masks; draw ``i`` depends only on (seed, stream, i)."""

    law: DropoutLaw
    seed: int = 0
    stream: tuple = (0,)
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._rng = stream_generator(self.seed, *self.stream)

    def sample(self, count: int | None = None) -> np.ndarray:
        """One mask of length d, or ``count`` masks stacked row-wise."""
        shape = (self.law.d,) if count is None else (int(count), self.law.d)
        return (self._rng.random(shape) < self.law.p).astype(np.float64)


def sample_mask(s: MaskSampler) -> np.ndarray:
    return s.sample()


def all_masks(d: int) -> np.ndarray:
    """All 2^d masks as rows; row m has bit j of m in coordinate j."""
    if d > MAX_ENUMERATION_DIM:
        raise BudgetExceeded(f"2^{d} masks exceeds the enumeration budget (d <= {MAX_ENUMERATION_DIM})")
    idx = np.arange(2**d, dtype=np.int64)
    return ((idx[:, None] >> np.arange(d)) & 1).astype(np.float64)


def mask_weights(masks: np.ndarray, p: float) -> np.ndarray:
    ones = masks.sum(axis=1)
    return p**ones * (1.0 - p) ** (masks.shape[1] - ones)


def enumerate_mask_expectation(f: Callable[[np.ndarray], np.ndarray], d: int, p: float):
    """Exact E[f(mask)] by summing over every mask with its Bernoulli weight."""
    p = check_probability(p)
    masks = all_masks(d)
    weights = mask_weights(masks, p)
    total = None
    for w, m in zip(weights, masks):
        term = w * np.asarray(f(m), dtype=np.float64)
        total = term if total is None else total + term
    return total


def _same_dim(*mats):
    d = mats[0].shape[0]
    if any(M.shape != (d, d) for M in mats):
        raise DimensionMismatch("all matrices must be square of the same size")
    return d


def e_dad(A, p: float) -> np.ndarray:
    """E[D A D] = p A_p."""
    return p * p_rescale(as_square(A), p)


def e_dadbd(A, B, p: float) -> np.ndarray:
    """E[D A D B D] = p A_p B_p + p^2 (1-p) Diag(Ā B)."""
    A, B = as_square(A, "A"), as_square(B, "B")
    _same_dim(A, B)
    p = check_probability(p)
    Ap, Bp = p_rescale(A, p), p_rescale(B, p)
    return p * Ap @ Bp + p * p * (1 - p) * np.diag(np.diag(overline(A) @ B))


def e_dadbdcd(A, B, C, p: float) -> np.ndarray:
    """E[D A D B D C D], including the Hadamard correction A ⊙ B̄ᵀ ⊙ C."""
    A, B, C = as_square(A, "A"), as_square(B, "B"), as_square(C, "C")
    _same_dim(A, B, C)
    p = check_probability(p)
    Ap, Bp, Cp = p_rescale(A, p), p_rescale(B, p), p_rescale(C, p)
    Ab, Bb, Cb = overline(A), overline(B), overline(C)

    def dg(M):
        return np.diag(np.diag(M))

    corr = dg(Ab @ Bp @ Cb) + Ap @ dg(Bb @ C) + dg(A @ Bb) @ Cp + (1 - p) * A * Bb.T * C
    return p * Ap @ Bp @ Cp + p * p * (1 - p) * corr


def dropout_update_cov(A, u, v, p: float) -> np.ndarray:
    """Cov(D u + D Ā (D - pI) v) for symmetric A."""
    A = check_symmetric(A)
    d = A.shape[0]
    u, v = as_vector(u, "u", d), as_vector(v, "v", d)
    p = check_probability(p)
    Ab = overline(A)
    uu, vv, vu = np.outer(u, u), np.outer(v, v), np.outer(v, u)
    inner = Ab @ np.diag(np.diag(vv)) @ Ab
    out = (
        np.diag(np.diag(uu))
        + p * Ab @ np.diag(np.diag(vu))
        + p * np.diag(np.diag(vu.T)) @ Ab
        + p * p_rescale(inner, p)
        + p * (1 - p) * A * overline(vv) * A
    )
    return p * (1 - p) * out
