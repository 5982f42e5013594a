import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dropout_linreg.dynamics import SchemeConfig, run_trajectory, step
from dropout_linreg.errors import DimensionMismatch
from dropout_linreg.matrix_core import spectral_norm
from dropout_linreg.model import LinearModel, minimizer_map
from dropout_linreg.montecarlo import (
    EnsembleConfig,
    MomentAccumulator,
    check_with_retry,
    compare_to_fixed_point,
    gauss_markov_defect,
    merge_accumulators,
    run_ensemble,
    welford_update,
    write_stats_csv,
    write_stats_json,
)
from dropout_linreg.operators import (
    SOperator,
    enumerate_chain_moments,
    exact_moment_path,
    fixed_point_excess_cov,
    gauss_markov_ceiling,
)


def stream(samples):
    acc = MomentAccumulator.empty(samples.shape[1])
    for x in samples:
        acc = welford_update(acc, x)
    return acc


def test_welford_small_cases():
    one = stream(np.array([[1.0, 2.0]]))
    assert one.count == 1 and np.array_equal(one.mean, [1.0, 2.0])
    assert np.array_equal(one.covariance(), np.zeros((2, 2)))
    two = stream(np.array([[0.0], [2.0]]))
    assert two.mean[0] == 1.0 and two.covariance()[0, 0] == 2.0
    with pytest.raises(DimensionMismatch):
        welford_update(one, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionMismatch):
        merge_accumulators(one, MomentAccumulator.empty(3))


def test_welford_matches_two_pass(rng):
    X = rng.standard_normal((10_000, 3)) * [1.0, 5.0, 0.1] + [100.0, -3.0, 0.0]
    acc = stream(X)
    assert np.max(np.abs(acc.mean - X.mean(axis=0))) <= 1e-10
    assert np.max(np.abs(acc.covariance() - np.cov(X.T))) <= 1e-10
    assert np.allclose(acc.second_moment(), X.T @ X / len(X), rtol=1e-12)


@given(st.integers(0, 2**31), st.integers(2, 60), st.integers(1, 59))
def test_merge_order_and_associativity(seed, n, cut):
    X = np.random.default_rng(seed).standard_normal((n, 2))
    cut = min(cut, n - 1)
    a, b = MomentAccumulator.from_samples(X[:cut]), MomentAccumulator.from_samples(X[cut:])
    full = MomentAccumulator.from_samples(X)
    for m in (merge_accumulators(a, b), merge_accumulators(b, a)):
        assert m.count == n
        assert np.allclose(m.mean, full.mean, atol=1e-12) and np.allclose(m.m2, full.m2, atol=1e-12)
    if n >= 3:
        c1 = max(1, cut // 2)
        p, q, r = (MomentAccumulator.from_samples(s) for s in (X[:c1], X[c1:cut], X[cut:]))
        if q.count:
            left = merge_accumulators(merge_accumulators(p, q), r)
            right = merge_accumulators(p, merge_accumulators(q, r))
            assert np.allclose(left.m2, right.m2, atol=1e-12)


def test_single_replica(ref_model):
    sc = SchemeConfig("dropout", 0.05, 0.5, k_max=20, seed=9)
    stats = run_ensemble(EnsembleConfig(ref_model, sc, 1))
    s = stats.summary(20, "iterate")
    assert not s.se_defined and s.replicas_used == 1
    Y = ref_model.X @ ref_model.beta_star
    from dropout_linreg.dynamics import NOISE_STREAM
    from dropout_linreg.dropout_algebra import stream_generator
    from dropout_linreg.model import draw_noise
    Y = Y + draw_noise(ref_model, stream_generator(9, 0, NOISE_STREAM))
    traj = run_trajectory(ref_model, Y, sc, 0)
    assert np.allclose(s.mean, traj.iterates[-1], atol=1e-14)


def test_zero_noise_plain_gd_is_deterministic(ref_model):
    sc = SchemeConfig("plain_gd", 0.1, 0.5, k_max=30)
    stats = run_ensemble(EnsembleConfig(ref_model, sc, 50, resample_Y=False, Y=(0.0, -1.0)))
    assert np.max(np.abs(stats.summary(30, "iterate").covariance)) <= 1e-20


def test_first_step_mean_against_enumeration(ref_model):
    sc0 = SchemeConfig("dropout", 0.05, 0.5, k_max=1, seed=31)
    gaps, _, _ = enumerate_chain_moments(ref_model, 0.05, 0.5, [0.0, 0.0], 1)

    def check(seed):
        sc = SchemeConfig("dropout", 0.05, 0.5, k_max=1, seed=seed)
        s = run_ensemble(EnsembleConfig(ref_model, sc, 5000)).summary(1, "diff")
        return bool(np.all(np.abs(s.mean - gaps[1]) <= 3 * s.se_mean))

    assert check_with_retry(check, sc0.seed)[0]


def test_covariance_against_exact_path(ref_model, ref_op):
    gaps, As, _ = exact_moment_path(ref_op, [0.0, 0.0], 100)

    def check(seed):
        sc = SchemeConfig("dropout", 0.05, 0.5, k_max=100, seed=seed, checkpoints=(10, 100))
        stats = run_ensemble(EnsembleConfig(ref_model, sc, 4000))
        ok = True
        for k in (10, 100):
            s = stats.summary(k, "diff")
            exact = As[k] - np.outer(gaps[k], gaps[k])
            ok &= bool(np.all(np.abs(s.covariance - exact) <= 3 * s.se_cov))
        return ok

    assert check_with_retry(check, 77)[0]


def test_compare_to_fixed_point(ref_model, ref_op):
    V = fixed_point_excess_cov(ref_op)
    sc = SchemeConfig("dropout", 0.05, 0.5, k_max=500, seed=5, checkpoints=(50, 200, 500))
    stats = run_ensemble(EnsembleConfig(ref_model, sc, 4000))
    rep = compare_to_fixed_point(stats, V, 500)
    assert rep.satisfied, rep.to_dict()
    dist = [compare_to_fixed_point(stats, V, k).observed for k in (50, 200)]
    assert dist[0] > dist[1]


def test_fixed_point_zero_for_diagonal_gram():
    m = LinearModel(np.diag([1.0, 1.5]), [1.0, -1.0])
    op = SOperator(m, 0.1, 0.5)
    assert np.array_equal(fixed_point_excess_cov(op), np.zeros((2, 2)))
    sc = SchemeConfig("dropout", 0.1, 0.5, k_max=300, seed=6, checkpoints=(300,))
    stats = run_ensemble(EnsembleConfig(m, sc, 4000))
    # Exactly zero in theory; allow for floating point roundoff only.
    assert compare_to_fixed_point(stats, np.zeros((2, 2)), 300, theoretical=1e-10).satisfied


def exact_defect(op, k_max):
    gaps, _, Bs = exact_moment_path(op, [0.0, 0.0], k_max)
    mu = op.mean_beta_tilde
    out = []
    for g, B in zip(gaps, Bs):
        c = B - np.outer(g, mu)
        out.append(spectral_norm(c + c.T))
    return np.array(out)


def test_gauss_markov_defect_matches_exact(ref_model, ref_op):
    exact = exact_defect(ref_op, 200)
    assert abs(exact[200] - 0.02601) < 1e-4
    ceil = [gauss_markov_ceiling(ref_op, k, [0.0, 0.0]) for k in (0, 20, 200)]

    def check(seed):
        sc = SchemeConfig("dropout", 0.05, 0.5, k_max=200, seed=seed, checkpoints=(0, 20, 200))
        stats = run_ensemble(EnsembleConfig(ref_model, sc, 20_000))
        ok = True
        for k, c in zip((0, 20, 200), ceil):
            rep = gauss_markov_defect(stats, k, c)
            ok &= rep.satisfied and abs(rep.observed - exact[k]) <= 3 * rep.details["se"]
        return ok

    assert check_with_retry(check, 2024)[0]


def test_gauss_markov_defect_vanishes_for_plain_gd(ref_model):
    sc = SchemeConfig("plain_gd", 0.3, 0.5, k_max=200, seed=3, checkpoints=(0, 200))
    stats = run_ensemble(EnsembleConfig(ref_model, sc, 2000))
    assert gauss_markov_defect(stats, 200, 1e-6).observed < 1e-6
    assert gauss_markov_defect(stats, 0, 0.0).observed > 0.1


def test_determinism_and_parallel_invariance(ref_model, tmp_path):
    sc = SchemeConfig("dropout", 0.05, 0.5, k_max=50, seed=12)
    runs = [run_ensemble(EnsembleConfig(ref_model, sc, 600, parallel=par)) for par in (1, 1, 4)]
    for i, r in enumerate(runs):
        write_stats_json(r, tmp_path / f"s{i}.json")
        write_stats_csv(r, tmp_path / f"s{i}.csv")
    for ext in ("json", "csv"):
        texts = {(tmp_path / f"s{i}.{ext}").read_bytes() for i in range(3)}
        assert len(texts) == 1
    other = run_ensemble(EnsembleConfig(ref_model, sc, 600, master_seed=13))
    assert not np.array_equal(other.summary(50).mean, runs[0].summary(50).mean)


def test_anchor_covariance(ref_model):
    sc = SchemeConfig("dropout", 0.05, 0.5, k_max=0, seed=4)
    s = run_ensemble(EnsembleConfig(ref_model, sc, 20_000)).summary(0, "anchor")
    A = minimizer_map(ref_model, 0.5)
    exact = A @ A.T
    assert np.all(np.abs(s.covariance - exact) <= 4 * s.se_cov)
    assert np.all(np.abs(s.mean - A @ ref_model.X @ ref_model.beta_star) <= 4 * s.se_mean)


def enumerate_fixed_y(m, Y, alpha, p, k):
    """Exact mean and covariance of β_k for a fixed response by listing all mask paths."""
    d = m.d
    vals, ws = [], []
    for bits in itertools.product((0.0, 1.0), repeat=d * k):
        D = np.array(bits).reshape(k, d)
        b = np.zeros(d)
        for t in range(k):
            b = step("dropout", m, Y, b, alpha, D[t])
        vals.append(b)
        ws.append(np.prod(np.where(D == 1.0, p, 1 - p)))
    vals, ws = np.array(vals), np.array(ws)
    mu = ws @ vals
    C = (vals - mu).T @ ((vals - mu) * ws[:, None])
    return mu, C


def test_fixed_response_and_total_covariance(ref_model):
    alpha, p, k = 0.3, 0.5, 3
    sc = SchemeConfig("dropout", alpha, p, k_max=k, seed=15)
    cfg = EnsembleConfig(ref_model, sc, 20_000, resample_Y=False)
    Y = cfg.fixed_response()
    mu, C = enumerate_fixed_y(ref_model, Y, alpha, p, k)
    s = run_ensemble(cfg).summary(k, "iterate")
    assert np.all(np.abs(s.mean - mu) <= 4 * s.se_mean)
    assert np.all(np.abs(s.covariance - C) <= 4 * s.se_cov)
    assert spectral_norm(s.covariance) > 0



def test_total_covariance_with_rademacher_noise(ref_model):
    # With ±1 noise Y takes four equally likely values, so the law of total
    # covariance can be evaluated exactly by enumeration.
    alpha, p, k = 0.3, 0.5, 3
    m = LinearModel(ref_model.X, ref_model.beta_star, noise="rademacher")
    mean_Y = m.X @ m.beta_star
    conds = [enumerate_fixed_y(m, mean_Y + np.array(e), alpha, p, k)
             for e in itertools.product((-1.0, 1.0), repeat=2)]
    mus = np.array([c[0] for c in conds])
    total = np.mean([c[1] for c in conds], axis=0) + np.cov(mus.T, bias=True)
    sc = SchemeConfig("dropout", alpha, p, k_max=k, seed=16)
    s = run_ensemble(EnsembleConfig(m, sc, 20_000)).summary(k, "iterate")
    assert np.all(np.abs(s.mean - mus.mean(axis=0)) <= 4 * s.se_mean)
    assert np.all(np.abs(s.covariance - total) <= 4 * s.se_cov)
