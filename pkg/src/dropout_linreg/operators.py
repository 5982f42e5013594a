"""Second-moment operators S and T, the asymptotic fixed point, and bound evaluators.

Notation used throughout: M = I − αp𝕏_p is the mean-recursion matrix, and
γ = ‖M‖ = 1 − αpλ_min(𝕏_p) its contraction factor.  β₀ is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dropout_algebra import MAX_ENUMERATION_DIM, all_masks, mask_weights
from .errors import BudgetExceeded, DimensionMismatch, HypothesisViolated, NoConvergence, NotInvertible
from .matrix_core import (
    as_square,
    as_vector,
    check_probability,
    check_symmetric,
    neumann_apply_inverse,
    overline,
    p_rescale,
    solve_spd,
    spectral_norm,
)
from .model import (
    LinearModel,
    gram_bundle,
    minimizer_map,
    response_mean,
    response_second_moment,
)

__all__ = [
    "BoundReport",
    "SOperator",
    "TOperator",
    "ebb_closed_form",
    "exy_closed_form",
    "apply_S",
    "apply_T",
    "vectorize",
    "assumption_gate",
    "theorem_gate",
    "s_lin_operator_norm_bound",
    "certify_s_lin_bound",
    "fixed_point_excess_cov",
    "fixed_point_by_iteration",
    "fixed_point_direct",
    "initial_moments",
    "remainder",
    "exact_moment_path",
    "enumerate_chain_moments",
    "constant_C",
    "gauss_markov_ceiling",
    "proof_constants",
    "bound_mean_convergence",
    "bound_second_moment_limit",
    "bound_small_alpha_gap",
    "lower_bound_suboptimality",
    "bound_rp_average",
    "bound_simplified_convergence",
    "singular_design_floor",
    "singular_design_recursion",
]

CHAIN_BUDGET_BITS = 20


@dataclass
class BoundReport:
    """Theoretical value against an observation.

    ``kind`` is "upper" (observed must not exceed theoretical) or "lower".
    ``tolerance`` is added in the favourable direction, typically 3 SE.
    Without an observation ``satisfied`` is None.
    """

    name: str
    theoretical: float
    observed: float = math.nan
    satisfied: bool | None = None
    margin: float = math.nan
    kind: str = "upper"
    tolerance: float = 0.0
    details: dict = field(default_factory=dict)

    @classmethod
    def evaluate(cls, name, theoretical, observed=None, tolerance=0.0, kind="upper", **details):
        rep = cls(name=name, theoretical=float(theoretical), kind=kind, tolerance=float(tolerance),
                  details=details)
        if observed is not None and not math.isnan(observed):
            rep.observed = float(observed)
            if kind == "upper":
                rep.margin = rep.theoretical + rep.tolerance - rep.observed
            else:
                rep.margin = rep.observed + rep.tolerance - rep.theoretical
            rep.satisfied = bool(rep.margin >= 0)
        return rep

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("theoretical", "observed", "margin", "tolerance"):
            if math.isnan(out[key]) or math.isinf(out[key]):
                out[key] = None
        return out


def _dg(A):
    return np.diag(np.diag(A))


def exy_closed_form(m: LinearModel) -> np.ndarray:
    """E[XᵀYYᵀX] = Xᵀ(Xβ⋆β⋆ᵀXᵀ + I)X."""
    return m.X.T @ response_second_moment(m) @ m.X


def ebb_closed_form(m: LinearModel, p: float) -> np.ndarray:
    """E[β̃β̃ᵀ] = 𝕏_p⁻¹Xᵀ(Xβ⋆β⋆ᵀXᵀ + I)X𝕏_p⁻¹."""
    H = minimizer_map(m, p)
    E = H @ response_second_moment(m) @ H.T
    return 0.5 * (E + E.T)


@dataclass(frozen=True, eq=False)
class SOperator:
    """The affine map S on d x d matrices for dropout gradient descent."""

    model: LinearModel
    alpha: float
    p: float

    def __post_init__(self):
        check_probability(self.p)
        g = gram_bundle(self.model, self.p)
        object.__setattr__(self, "gram", g)
        object.__setattr__(self, "ebb", ebb_closed_form(self.model, self.p))
        object.__setattr__(self, "M", np.eye(g.d) - self.alpha * self.p * g.XX_p)
        object.__setattr__(self, "s0", self._apply(np.zeros((g.d, g.d))))

    @property
    def d(self) -> int:
        return self.gram.d

    @property
    def gamma(self) -> float:
        """‖I − αp𝕏_p‖, which equals 1 − αpλ_min(𝕏_p) under the step-size gate."""
        return spectral_norm(self.M)

    @property
    def mean_beta_tilde(self) -> np.ndarray:
        return minimizer_map(self.model, self.p) @ response_mean(self.model)

    def _apply(self, A, linear_only=False):
        a, p, g = self.alpha, self.p, self.gram
        XX, XXp, XXb = g.XX, g.XX_p, g.XX_bar
        AE = A if linear_only else A + self.ebb
        out = (
            self.M @ A @ self.M
            + a * a * p * (1 - p) * _dg(XXp @ A @ XXp)
            + a * a * p * p * (1 - p) ** 2 * XX * overline(AE) * XX
            + a * a * p * p * (1 - p) * (
                p_rescale(XXb @ _dg(AE) @ XXb, p) + XXb @ _dg(XXp @ A) + _dg(XXp @ A) @ XXb
            )
        )
        return out

    def __call__(self, A) -> np.ndarray:
        return apply_S(self, A)

    def linear(self, A) -> np.ndarray:
        """S_lin(A) = S(A) − S(0)."""
        A = as_square(A)
        return self._apply(A, linear_only=True)


@dataclass(frozen=True, eq=False)
class TOperator:
    """The linear map T(A) = (I−αp𝕏)A(I−αp𝕏) + α²p(1−p)Diag(𝕏A𝕏)."""

    model: LinearModel
    alpha: float
    p: float

    def __post_init__(self):
        check_probability(self.p)
        g = gram_bundle(self.model, self.p)
        object.__setattr__(self, "gram", g)
        object.__setattr__(self, "N", np.eye(g.d) - self.alpha * self.p * g.XX)

    @property
    def d(self) -> int:
        return self.gram.d

    def __call__(self, A) -> np.ndarray:
        return apply_T(self, A)


def _check_op_input(op, A):
    A = check_symmetric(A)
    if A.shape != (op.d, op.d):
        raise DimensionMismatch(f"expected a {op.d}x{op.d} matrix, got {A.shape}")
    return A


def apply_S(op: SOperator, A) -> np.ndarray:
    A = _check_op_input(op, A)
    return op._apply(A)


def apply_T(op: TOperator, A) -> np.ndarray:
    A = _check_op_input(op, A)
    a, p, XX = op.alpha, op.p, op.gram.XX
    return op.N @ A @ op.N + a * a * p * (1 - p) * _dg(XX @ A @ XX)


def vectorize(linear_map, d: int) -> np.ndarray:
    """d² x d² matrix L with vec(f(A)) = L vec(A) (row-major vec)."""
    L = np.empty((d * d, d * d))
    for j in range(d * d):
        E = np.zeros(d * d)
        E[j] = 1.0
        L[:, j] = linear_map(E.reshape(d, d)).ravel()
    return L


def assumption_gate(op) -> float:
    """αp‖𝕏‖, which must stay below 1."""
    return op.alpha * op.p * op.gram.norm_XX


def theorem_gate(op: SOperator) -> float:
    """The threshold λ_min(𝕏_p)/(3‖𝕏‖²) that α must stay strictly below."""
    return op.gram.lam_min_XXp / (3.0 * op.gram.norm_XX**2)


def _require_assumption(op):
    if op.gram.min_diag <= 0:
        raise HypothesisViolated("design is not in reduced form")
    if not assumption_gate(op) < 1.0:
        raise HypothesisViolated(f"alpha*p*||XX|| = {assumption_gate(op):.6g} is not < 1")


def _require_theorem(op):
    _require_assumption(op)
    gate = theorem_gate(op)
    if not op.alpha < gate:
        raise HypothesisViolated(f"alpha = {op.alpha:.6g} is not below lambda_min(XX_p)/(3||XX||^2) = {gate:.6g}")


def _gate_details(op) -> dict:
    return {"assumption_gate": assumption_gate(op), "theorem_gate": theorem_gate(op),
            "theorem_gate_met": bool(op.alpha < theorem_gate(op))}


def s_lin_operator_norm_bound(op: SOperator, check_hypothesis: bool = True) -> float:
    """‖I − αp𝕏_p‖, an upper bound on the operator norm of S_lin."""
    if check_hypothesis:
        _require_theorem(op)
    return 1.0 - op.alpha * op.p * op.gram.lam_min_XXp


def certify_s_lin_bound(op: SOperator, probes: int = 20, seed: int = 0,
                        check_hypothesis: bool = True) -> BoundReport:
    """Largest ‖S_lin(A)‖ over random unit-norm symmetric probes A."""
    bound = s_lin_operator_norm_bound(op, check_hypothesis)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        G = rng.standard_normal((op.d, op.d))
        A = G + G.T
        A /= spectral_norm(A)
        worst = max(worst, spectral_norm(op.linear(A)))
    return BoundReport.evaluate("s_lin_operator_norm", bound, worst, 1e-12, **_gate_details(op))


def fixed_point_excess_cov(op: SOperator, tol: float = 1e-15, max_terms: int = 1_000_000) -> np.ndarray:
    """V = (id − S_lin)⁻¹S₀ by the Neumann series Σ S_linʲ(S₀)."""
    V = neumann_apply_inverse(op.linear, op.s0, tol=tol, max_terms=max_terms).value
    return 0.5 * (V + V.T)


def fixed_point_by_iteration(op: SOperator, tol: float = 1e-15, max_iter: int = 1_000_000) -> np.ndarray:
    """Iterate A ← S(A) from A = 0 until the update is below tol."""
    A = np.zeros((op.d, op.d))
    for _ in range(max_iter):
        B = op._apply(A)
        if spectral_norm(B - A) <= tol:
            return 0.5 * (B + B.T)
        A = B
    raise NoConvergence(f"affine iteration did not settle within {max_iter} steps")


def fixed_point_direct(op: SOperator) -> np.ndarray:
    """Solve (I − L)vec(V) = vec(S₀) with L the d² x d² matrix of S_lin."""
    L = vectorize(op.linear, op.d)
    v = np.linalg.solve(np.eye(op.d * op.d) - L, op.s0.ravel())
    V = v.reshape(op.d, op.d)
    return 0.5 * (V + V.T)


def initial_moments(op: SOperator, beta0):
    """(E[Z₀], A₀, B₀) for Z₀ = β₀ − β̃ with deterministic β₀."""
    b0 = as_vector(beta0, "beta0", op.d)
    mu = op.mean_beta_tilde
    gap = b0 - mu
    A0 = np.outer(b0, b0) - np.outer(b0, mu) - np.outer(mu, b0) + op.ebb
    B0 = np.outer(b0, mu) - op.ebb
    return gap, A0, B0


def remainder(op: SOperator, B) -> np.ndarray:
    """ρ(B) = A_k − S(A_{k−1}) in terms of B = E[(β̃_{k−1} − β̃)β̃ᵀ]."""
    a, p, g = op.alpha, op.p, op.gram
    XX, XXp, XXb = g.XX, g.XX_p, g.XX_bar
    Bs = B + B.T
    DB = _dg(XXp @ B)
    inner = p * XXb @ DB + p * DB @ XXb + p * p_rescale(XXb @ _dg(Bs) @ XXb, p) \
        + p * (1 - p) * XX * overline(Bs) * XX
    return a * a * p * (1 - p) * inner


def exact_moment_path(op: SOperator, beta0, k_max: int):
    """Exact (E[Z_k], A_k, B_k) for k = 0..k_max from the closed-form recursion.

    A_k = S(A_{k−1}) + ρ(B_{k−1}), B_k = M B_{k−1}, E[Z_k] = M E[Z_{k−1}].
    """
    gap, A, B = initial_moments(op, beta0)
    gaps, As, Bs = [gap], [A], [B]
    for _ in range(k_max):
        A = op._apply(A) + remainder(op, B)
        A = 0.5 * (A + A.T)
        B = op.M @ B
        gap = op.M @ gap
        gaps.append(gap)
        As.append(A)
        Bs.append(B)
    return np.array(gaps), np.array(As), np.array(Bs)


def enumerate_chain_moments(m: LinearModel, alpha: float, p: float, beta0, k_max: int,
                            scheme: str = "dropout"):
    """Exact moments of the iterates by enumerating every mask sequence.

    Each iterate is affine in Y, β_k = P_k (Y, 1).  Summing over all 2^{dk}
    sequences with their probabilities and combining with the closed-form
    first and second moments of Y gives, for k = 0..k_max,
    (E[Z_k], A_k = E[Z_kZ_kᵀ], B_k = E[Z_k aᵀ]) where Z_k = β_k − a and the
    anchor a is β̃ (dropout) or β̂ (simplified dropout, invertible 𝕏).
    """
    d, n = m.d, m.n
    if d * k_max > CHAIN_BUDGET_BITS or d > MAX_ENUMERATION_DIM:
        raise BudgetExceeded(f"2^(d*k) = 2^{d * k_max} sequences exceeds 2^{CHAIN_BUDGET_BITS}")
    if scheme == "dropout":
        H = minimizer_map(m, p)
    elif scheme == "simplified_dropout":
        H = np.linalg.solve(m.gram, m.X.T)
    else:
        raise ValueError(f"unsupported scheme {scheme!r}")
    Hw = np.hstack([H, np.zeros((d, 1))])
    mu = response_mean(m)
    W = np.zeros((n + 1, n + 1))
    W[:n, :n] = response_second_moment(m)
    W[:n, n] = W[n, :n] = mu
    W[n, n] = 1.0
    ew = np.append(mu, 1.0)

    masks = all_masks(d)
    mw = mask_weights(masks, p)
    XX, Xt = m.gram, m.X.T
    P = np.zeros((1, d, n + 1))
    P[0, :, n] = as_vector(beta0, "beta0", d)
    weights = np.ones(1)

    def moments(P, weights):
        Zm = P - Hw
        gap = np.einsum("s,sij,j->i", weights, Zm, ew)
        A = np.einsum("s,sij,jk,slk->il", weights, Zm, W, Zm)
        B = np.einsum("s,sij,jk,lk->il", weights, Zm, W, Hw)
        return gap, 0.5 * (A + A.T), B

    out = [moments(P, weights)]
    for _ in range(k_max):
        Dm = masks[None, :, :, None]
        Pe = P[:, None]
        if scheme == "dropout":
            upd = Xt @ np.concatenate([np.eye(n), np.zeros((n, 1))], axis=1) - XX @ (Dm * Pe)
        else:
            upd = Xt @ np.concatenate([np.eye(n), np.zeros((n, 1))], axis=1) - XX @ Pe
        P = (Pe + alpha * Dm * upd).reshape(-1, d, n + 1)
        weights = (weights[:, None] * mw[None, :]).ravel()
        out.append(moments(P, weights))
    gaps, As, Bs = zip(*out)
    return np.array(gaps), np.array(As), np.array(Bs)


def constant_C(op: SOperator, beta0, V=None) -> float:
    """C = ‖A₀ − V‖ + 6‖E[(β̃₀ − β̃)β̃ᵀ]‖ + ‖E[β̃₀ − β̃]‖² for deterministic β₀."""
    if V is None:
        V = fixed_point_excess_cov(op)
    gap, A0, B0 = initial_moments(op, beta0)
    return spectral_norm(A0 - V) + 6.0 * spectral_norm(B0) + float(gap @ gap)


def bound_mean_convergence(op: SOperator, k: int, init_gap_norm: float, observed=None,
                           tolerance: float = 0.0) -> BoundReport:
    """‖E[β̃_k − β̃]‖ ≤ (1 − αpλ_min(𝕏_p))ᵏ ‖E[β̃₀ − β̃]‖."""
    _require_assumption(op)
    rate = 1.0 - op.alpha * op.p * op.gram.lam_min_XXp
    return BoundReport.evaluate("mean_convergence", rate**k * init_gap_norm, observed, tolerance,
                                k=int(k), rate=rate)


def bound_second_moment_limit(op: SOperator, k: int, C: float | None = None, beta0=None,
                              observed=None, tolerance: float = 0.0, trace: bool = False,
                              check_hypothesis: bool = True) -> BoundReport:
    """‖A_k − V‖ ≤ C k γ^{k−1}; with ``trace`` the bound on |E‖Z_k‖² − Tr V| (times d)."""
    if check_hypothesis:
        _require_theorem(op)
    else:
        _require_assumption(op)
    if C is None:
        if beta0 is None:
            raise ValueError("either C or beta0 is required")
        C = constant_C(op, beta0)
    rate = 1.0 - op.alpha * op.p * op.gram.lam_min_XXp
    value = C * k * rate ** (k - 1) if k > 0 else C
    if trace:
        value *= op.d
    name = "limit_formula_trace" if trace else "limit_formula"
    return BoundReport.evaluate(name, value, observed, tolerance, k=int(k), C=float(C), rate=rate,
                                **_gate_details(op))


def _sup_init_gap(op: SOperator, beta0) -> float:
    """An upper bound on sup_{‖β⋆‖≤1} ‖β₀ − 𝕏_p⁻¹𝕏β⋆‖."""
    b0 = as_vector(beta0, "beta0", op.d)
    K = solve_spd(op.gram.XX_p, op.gram.XX)
    return float(np.linalg.norm(b0)) + spectral_norm(K)


def gauss_markov_ceiling(op: SOperator, k: int, beta0) -> float:
    """4‖𝕏_p⁻¹‖ · γᵏ · sup-gap, the ceiling on the Gauss–Markov defect at step k."""
    inv_norm = 1.0 / op.gram.lam_min_XXp
    rate = 1.0 - op.alpha * op.p * op.gram.lam_min_XXp
    return 4.0 * inv_norm * rate**k * _sup_init_gap(op, beta0)


def proof_constants(op: SOperator, beta0) -> dict:
    """Constants C₁..C₅ following the proof of the small-αp lemma.

    They are free of α, p and k once β₀, β⋆ and X are fixed, and are upper
    bounds only; tightness is not claimed.
    """
    g = op.gram
    m = g.min_diag
    nXX = g.norm_XX
    exy = spectral_norm(exy_closed_form(op.model))
    b0 = float(np.linalg.norm(as_vector(beta0, "beta0", op.d)))
    gbs = nXX * float(np.linalg.norm(op.model.beta_star)) / m
    C1 = 4.0 * (b0 + nXX / m) / m
    C4 = (b0**2 + 2 * b0 * gbs + exy / m**2) + 6 * (b0 * gbs + exy / m**2) + (b0 + gbs) ** 2
    C2 = C4 + nXX * exy / m**3
    C3 = nXX**2 * exy / m**3
    C5 = 2.0 * spectral_norm(g.XX_bar) * nXX / m**3
    return {"C1": C1, "C2": C2, "C3": C3, "C4": C4, "C5": C5,
            "C_prime": C1 + C2, "C_dprime": max(C3, C5)}


def bound_small_alpha_gap(op: SOperator, k: int, beta0, observed=(None, None), tolerance=(0.0, 0.0),
                          check_hypothesis: bool = True):
    """Both small-αp displays with proof-trace constants C′ = C₁ + C₂, C″ = max(C₃, C₅).

    First:  ‖Cov(β̃_k) − Cov(β̃)‖ ≤ (C′kγ^{k−1} + αpC″)/(1−p)².
    Second: ‖Cov(β̃_k) − Diag(𝕏)⁻¹𝕏Diag(𝕏)⁻¹‖ ≤ (C′kγ^{k−1} + p(1+α)C″)/(1−p)².
    """
    if check_hypothesis:
        _require_theorem(op)
    else:
        _require_assumption(op)
    c = proof_constants(op, beta0)
    a, p = op.alpha, op.p
    rate = 1.0 - a * p * op.gram.lam_min_XXp
    transient = c["C_prime"] * k * rate ** (k - 1) if k > 0 else c["C_prime"]
    first = (transient + a * p * c["C_dprime"]) / (1 - p) ** 2
    second = (transient + p * (1 + a) * c["C_dprime"]) / (1 - p) ** 2
    return (
        BoundReport.evaluate("small_alpha_gap_vs_cov_beta_tilde", first, observed[0], tolerance[0],
                             k=int(k), **c, **_gate_details(op)),
        BoundReport.evaluate("small_alpha_gap_vs_diag_sandwich", second, observed[1], tolerance[1],
                             k=int(k), **c, **_gate_details(op)),
    )


def lower_bound_suboptimality(op: SOperator) -> float:
    """αp(1−p)²λ_min(𝕏)/(2‖𝕏‖³) · min over nonzero off-diagonal 𝕏_ij²."""
    XXb = op.gram.XX_bar
    if np.any(np.all(XXb == 0.0, axis=1)):
        raise HypothesisViolated("some row of XX has no nonzero off-diagonal entry")
    off = XXb[XXb != 0.0]
    lam = op.gram.lam_min_XX
    a, p = op.alpha, op.p
    return a * p * (1 - p) ** 2 * lam / (2.0 * op.gram.norm_XX**3) * float(np.min(off * off))


def bound_rp_average(op: SOperator, k: int, C: float | None = None, beta0=None, observed=None,
                     tolerance: float = 0.0, check_hypothesis: bool = True) -> BoundReport:
    """‖E[(β̄ᵏ − β̃)(β̄ᵏ − β̃)ᵀ]‖ ≤ 2‖𝕏‖²‖E XᵀYYᵀX‖/(k(1−p)m⁴) + 2C/(k²(αp(1−p)m)³), m = min 𝕏_ii."""
    if check_hypothesis:
        _require_theorem(op)
    else:
        _require_assumption(op)
    if C is None:
        if beta0 is None:
            raise ValueError("either C or beta0 is required")
        C = constant_C(op, beta0)
    g, a, p = op.gram, op.alpha, op.p
    m = g.min_diag
    exy = spectral_norm(exy_closed_form(op.model))
    first = 2.0 * g.norm_XX**2 * exy / (k * (1 - p) * m**4)
    second = 2.0 * C / (k * k * (a * p * (1 - p) * m) ** 3)
    return BoundReport.evaluate("ruppert_polyak", first + second, observed, tolerance, k=int(k),
                                first_term=first, second_term=second, C=float(C), **_gate_details(op))


def bound_simplified_convergence(op: TOperator, k: int, A0_norm: float | None = None, A0=None,
                                 observed=None, tolerance: float = 0.0) -> BoundReport:
    """‖A_k‖ ≤ (1 − αpλ_min(𝕏))ᵏ‖A₀‖ for simplified dropout.

    When ``A0`` is given, Tʲ(A₀) is iterated for j ≤ k and the largest ratio
    ‖Tʲ(A₀)‖ / bound_j is recorded in ``details["max_ratio"]``.
    """
    g = op.gram
    lam = g.lam_min_XX
    if lam <= 1e-12 * max(g.norm_XX, 1.0):
        raise NotInvertible("XX is singular")
    gate = min(1.0 / (op.p * g.norm_XX), lam / g.norm_XX**2)
    if op.alpha > gate:
        raise HypothesisViolated(f"alpha = {op.alpha:.6g} exceeds {gate:.6g}")
    rate = 1.0 - op.alpha * op.p * lam
    details = {"k": int(k), "rate": rate}
    if A0 is not None:
        A = check_symmetric(A0)
        A0_norm = spectral_norm(A)
        worst = 0.0
        for j in range(1, k + 1):
            A = apply_T(op, A)
            A = 0.5 * (A + A.T)
            worst = max(worst, spectral_norm(A) / (rate**j * A0_norm))
        details["max_ratio"] = worst
        details["T_iterate_norm"] = spectral_norm(A)
    if A0_norm is None:
        raise ValueError("either A0_norm or A0 is required")
    return BoundReport.evaluate("simplified_convergence", rate**k * A0_norm, observed, tolerance, **details)


def singular_design_floor(alpha: float, p: float, d: int) -> float:
    """α²p(1−p), the covariance floor for X = 𝟏ᵀ."""
    check_probability(p)
    if d < 2:
        raise HypothesisViolated("the singular-design floor needs d >= 2")
    return alpha * alpha * p * (1 - p)


def singular_design_recursion(alpha: float, p: float, d: int, k_max: int):
    """(ν_k, λ_k) for k = 0..k_max with Cov(β̂_k − β̂) ≥ ν_k I + (λ_k/d)𝕏.

    Starts from ν₀ = 0, λ₀ = 1/d, which encodes Cov(β̂) = d⁻²𝕏.  Equality holds
    when β₀ = E[β̂].
    """
    singular_design_floor(alpha, p, d)
    c = alpha * p * d
    nu, lam = [0.0], [1.0 / d]
    for _ in range(k_max):
        n0, l0 = nu[-1], lam[-1]
        nu.append(n0 + alpha * alpha * p * (1 - p) * d * (n0 + l0))
        lam.append(n0 * (c * c - 2 * c) + l0 * (1 - c) ** 2)
    return np.array(nu), np.array(lam)
