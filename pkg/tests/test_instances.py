from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from reliable_halfspaces.errors import ArgumentError, PartialSetError
from reliable_halfspaces.gaussian import gauss_hermite_rule
from reliable_halfspaces.instances import (
    CorruptionPolicy,
    DiscretizedFunction,
    Halfspace,
    HalfspaceOracle,
    IndependentLabelOracle,
    corrupt,
    derive_seed,
    embed_hard_instance,
    moment_residuals,
    near_orthogonal_set,
    negative_flip_mass,
    oracle_from_spec,
    sample_clean,
    solve_moment_matched_g,
    tail_threshold,
    verify_hard_instance,
)
from reliable_halfspaces.sampleio import SampleFileOracle, read_binary, read_jsonl, write_binary, write_jsonl


@pytest.fixture(scope="module")
def g_by_order():
    return {n: solve_moment_matched_g(n) for n in range(5)}


# --- halfspaces and clean sampling -------------------------------------------


def test_halfspace_unit_norm():
    with pytest.raises(ArgumentError):
        Halfspace(np.array([1.0, 1.0]), 0.0)
    h = Halfspace.axis(3, 0.5)
    assert h.predict(np.array([[0.5, 0, 0]]))[0] == 1  # sign(0) = +1
    assert h.bias == pytest.approx(stats.norm.sf(0.5))


def test_sample_clean_rates():
    _, y = sample_clean(Halfspace.axis(4, 0.0), 100000, seed=1)
    assert abs(np.mean(y == 1) - 0.5) <= 0.01
    _, y = sample_clean(Halfspace.axis(4, stats.norm.ppf(0.9)), 100000, seed=2)
    assert abs(np.mean(y == 1) - 0.1) <= 0.01


def test_sample_clean_deterministic():
    a = sample_clean(Halfspace.axis(3, 0.2), 500, seed=9)
    b = sample_clean(Halfspace.axis(3, 0.2), 500, seed=9)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()
    with pytest.raises(ArgumentError):
        sample_clean(Halfspace.axis(3, 0.2), 0, seed=9)


# --- corruption --------------------------------------------------------------


def test_corrupt_examples():
    truth = Halfspace.axis(3, 0.0)
    X, y = sample_clean(truth, 100000, seed=3)
    X2, y2 = corrupt((X, y), truth, CorruptionPolicy.none(), seed=4)
    assert np.array_equal(y, y2) and np.array_equal(X, X2)
    _, y3 = corrupt((X, y), truth, CorruptionPolicy.flip_region(), seed=4)
    assert np.mean(y3 == -1) == 0.0
    _, y4 = corrupt((X, y), truth, CorruptionPolicy.flip_prob(0.5), seed=4)
    assert abs(np.mean(y4 == -1) - 0.25) <= 0.01


def test_corrupt_rejects_moment_matched(g_by_order):
    truth = Halfspace.axis(2, 0.0)
    X, y = sample_clean(truth, 10, seed=0)
    with pytest.raises(ArgumentError):
        corrupt((X, y), truth, CorruptionPolicy("moment_matched", g=g_by_order[1]), seed=0)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(-1.5, 1.5),
    st.sampled_from(["none", "flip_prob", "region", "band"]),
    st.floats(0.0, 1.0),
    st.integers(0, 2**32 - 1),
)
def test_corrupt_only_raises_negatives(t, kind, r, seed):
    truth = Halfspace.axis(3, t)
    policy = {
        "none": CorruptionPolicy.none(),
        "flip_prob": CorruptionPolicy.flip_prob(r),
        "region": CorruptionPolicy.flip_region(t - 2 * r - 0.1, t - r),
        "band": CorruptionPolicy.threshold_band(r),
    }[kind]
    X, y = sample_clean(truth, 2000, seed=seed)
    _, y2 = corrupt((X, y), truth, policy, seed=seed + 1)
    changed = y2 != y
    assert np.all(y[changed] == -1) and np.all(y2[changed] == 1)
    assert not np.any((truth.predict(X) == 1) & (y2 == -1))


@pytest.mark.parametrize(
    "policy",
    [
        CorruptionPolicy.none(),
        CorruptionPolicy.flip_prob(0.3),
        CorruptionPolicy.flip_region(-0.5, 0.2),
        CorruptionPolicy.threshold_band(0.4),
    ],
)
def test_reliability_preserved_at_scale(policy):
    truth = Halfspace(np.array([0.6, 0.8, 0.0]), 0.4)
    oracle = HalfspaceOracle(truth, policy, seed=5)
    violations = 0
    for _ in range(5):
        X, y = oracle.sample(200000)
        violations += int(np.count_nonzero((truth.predict(X) == 1) & (y == -1)))
    assert violations == 0


def test_flip_counter_matches_mass():
    truth = Halfspace.axis(2, 0.3)
    policy = CorruptionPolicy.flip_prob(0.3)
    oracle = HalfspaceOracle(truth, policy, seed=1)
    oracle.sample(200000)
    assert oracle.n_flipped / oracle.n_drawn == pytest.approx(negative_flip_mass(truth, policy), abs=0.005)


def test_policy_round_trip():
    for p in [
        CorruptionPolicy.none(),
        CorruptionPolicy.flip_prob(0.3),
        CorruptionPolicy.flip_region(),
        CorruptionPolicy.flip_region(-1.0, 0.5),
        CorruptionPolicy.threshold_band(0.25),
    ]:
        assert CorruptionPolicy.from_dict(p.to_dict()) == p
    with pytest.raises(ArgumentError):
        CorruptionPolicy("mystery")
    with pytest.raises(ArgumentError):
        CorruptionPolicy.flip_prob(1.5)


# --- oracles -----------------------------------------------------------------


def _marginal_ok(X):
    mean_ok = np.max(np.abs(X.mean(axis=0))) <= 0.01
    cov_ok = np.max(np.abs(np.cov(X.T).reshape(X.shape[1], -1) - np.eye(X.shape[1]))) <= 0.02
    return mean_ok and cov_ok


def test_oracle_marginals_gaussian(g_by_order):
    v = np.ones(6) / math.sqrt(6)
    oracles = [
        HalfspaceOracle(Halfspace.axis(6, 0.5), CorruptionPolicy.flip_prob(0.4), seed=1),
        IndependentLabelOracle(10, 0.3, seed=2),
        embed_hard_instance(g_by_order[2], v, seed=3),
    ]
    for oracle in oracles:
        X, _ = oracle.sample(100000)
        assert _marginal_ok(X), type(oracle).__name__


def test_oracle_determinism_and_clones():
    a = HalfspaceOracle(Halfspace.axis(3, 0.1), CorruptionPolicy.flip_prob(0.2), seed=11)
    b = HalfspaceOracle(Halfspace.axis(3, 0.1), CorruptionPolicy.flip_prob(0.2), seed=11)
    xa, ya = a.sample(1000)
    xb, yb = b.sample(1000)
    assert xa.tobytes() == xb.tobytes() and ya.tobytes() == yb.tobytes()
    c1, c2 = a.clone(1), a.clone(2)
    assert not np.array_equal(c1.sample(10)[0], c2.sample(10)[0])
    assert np.array_equal(a.clone(1).sample(10)[0], b.clone(1).sample(10)[0])
    assert derive_seed(5, 1) != derive_seed(5, 2)


def test_oracle_from_spec():
    o = oracle_from_spec({"kind": "halfspace", "d": 4, "truth": {"axis": 1, "alpha": 0.2}, "policy": {"kind": "flip_prob", "rho": 0.3}}, 3)
    assert o.truth.w[1] == 1.0
    assert o.truth.t == pytest.approx(stats.norm.isf(0.2))
    assert o.policy.rho == 0.3
    assert oracle_from_spec({"kind": "independent", "d": 3}, 0).p_plus == 0.5
    with pytest.raises(ArgumentError):
        oracle_from_spec({"kind": "nope", "d": 3}, 0)


# --- moment-matched g --------------------------------------------------------


def test_tail_threshold_values():
    assert tail_threshold(0) == pytest.approx(0.6744897501960817, abs=1e-12)
    for n in range(6):
        assert stats.norm.sf(tail_threshold(n)) == pytest.approx(3.0 ** (-2 * n) / 4, rel=1e-9)


def test_g_order_zero_mass_balance(g_by_order):
    g = g_by_order[0]
    below = g.values[~g.pinned]
    rule = g.rule
    tail = rule.weights[g.pinned].sum()
    # minimum-norm feasible g is constant below c
    assert np.allclose(below, -tail / (1 - tail), atol=1e-9)
    assert tail == pytest.approx(0.25, abs=1e-12)
    assert g.tail_threshold == pytest.approx(0.67449, abs=1e-5)
    assert np.allclose(below, -1 / 3, atol=1e-9)


def test_g_on_gauss_hermite_rule():
    g = solve_moment_matched_g(1, gauss_hermite_rule())
    assert moment_residuals(g.values, g.rule, 1).max() <= 1e-8


@pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
def test_g_feasible(g_by_order, n):
    g = g_by_order[n]
    assert moment_residuals(g.values, g.rule, n).max() <= 1e-8
    assert g.values.min() >= -1 - 1e-9 and g.values.max() <= 1 + 1e-9
    assert np.all(g.values[g.rule.nodes >= g.tail_threshold] == 1.0)
    assert np.all(g(np.linspace(g.tail_threshold, 40, 50)) == 1.0)
    report = verify_hard_instance(g, n)
    assert report.ok()


def test_g_moments_against_independent_rule(g_by_order):
    # the interpolated g integrated with adaptive quadrature: only discretization error remains
    g = g_by_order[1]
    for k in range(2):
        val, _ = integrate.quad(lambda z: g(z) * z**k * stats.norm.pdf(z), -12, g.tail_threshold, points=[0.0], limit=400)
        val += integrate.quad(lambda z: z**k * stats.norm.pdf(z), g.tail_threshold, np.inf)[0]
        assert abs(val) <= 1e-4


def test_g_large_order_rejected():
    with pytest.raises(ArgumentError):
        solve_moment_matched_g(5)
    with pytest.raises(ArgumentError):
        solve_moment_matched_g(20)


def test_g_narrow_rule_rejected():
    with pytest.raises(ArgumentError):
        solve_moment_matched_g(1, gauss_hermite_rule(11))


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_chi_square_bounded(g_by_order, n):
    r = verify_hard_instance(g_by_order[n], n)
    assert 0.0 <= r.chi2_plus <= 10 and 0.0 <= r.chi2_minus <= 10


def test_zero_g_fails_tail_pin():
    rule = gauss_hermite_rule()
    g = DiscretizedFunction(rule, np.zeros(rule.size), math.inf)
    report = verify_hard_instance(g, 1)
    assert report.max_moment_residual == 0.0
    assert report.tail_pin_violation == 1.0
    assert not report.ok()


def test_discretized_round_trip(g_by_order):
    g = g_by_order[2]
    h = DiscretizedFunction.from_dict(g.to_dict())
    z = np.linspace(-5, 5, 101)
    assert np.array_equal(g(z), h(z))


# --- embedding ---------------------------------------------------------------


def test_embedded_tail_and_mean(g_by_order):
    g = g_by_order[2]
    v = np.zeros(5)
    v[2] = 1.0
    oracle = embed_hard_instance(g, v, seed=4)
    X, y = oracle.sample(100000)
    assert abs(np.mean(y)) <= 0.01
    # 10^5 tail draws: sample until enough points land above c
    tail_labels = []
    while sum(len(t) for t in tail_labels) < 100000:
        X, y = oracle.sample(2000000)
        tail_labels.append(y[X[:, 2] >= g.tail_threshold])
    assert np.all(np.concatenate(tail_labels) == 1)


def test_embedded_binned_conditional_mean(g_by_order):
    g = g_by_order[1]
    v = np.array([0.6, 0.0, 0.8])
    X, y = embed_hard_instance(g, v, seed=6).sample(200000)
    z = X @ v
    order = np.argsort(z)
    for chunk in np.array_split(order, 200):
        assert abs(np.mean(y[chunk]) - np.mean(g(z[chunk]))) <= 0.1
    # coarse bins of 10^3 points near the center, where g varies slowly
    center = order[(np.abs(z[order]) < 1.0)]
    for chunk in np.array_split(center, len(center) // 1000):
        assert abs(np.mean(y[chunk]) - np.mean(g(z[chunk]))) <= 0.05 + 3 / math.sqrt(len(chunk))


def test_embed_needs_unit_vector(g_by_order):
    with pytest.raises(ArgumentError):
        embed_hard_instance(g_by_order[0], np.array([1.0, 1.0]), seed=0)


# --- near-orthogonal families ------------------------------------------------


def test_near_orthogonal_set():
    vs = near_orthogonal_set(100, 20, 0.3, seed=0)
    M = np.array(vs)
    G = np.abs(M @ M.T)
    iu = np.triu_indices(20, 1)
    assert len(iu[0]) == 190
    assert G[iu].max() <= 0.3
    assert np.allclose(np.diag(G), 1.0)
    assert len(near_orthogonal_set(3, 1, 0.0, seed=1)) == 1


def test_near_orthogonal_exhausts():
    with pytest.raises(PartialSetError) as info:
        near_orthogonal_set(2, 10, 0.05, seed=0, tries_per_vector=200, restarts=3)
    assert 1 <= info.value.achieved < 10


# --- sample files ------------------------------------------------------------


def test_sample_file_round_trip(tmp_path):
    X, y = sample_clean(Halfspace.axis(3, 0.1), 50, seed=0)
    write_jsonl(tmp_path / "s.jsonl", X, y)
    write_binary(tmp_path / "s.bin", X, y)
    for Xr, yr in (read_jsonl(tmp_path / "s.jsonl"), read_binary(tmp_path / "s.bin")):
        assert np.array_equal(Xr, X) and np.array_equal(yr, y)
    raw = (tmp_path / "s.bin").read_bytes()
    assert raw[:4] == b"RHS1" and len(raw) == 16 + 50 * 3 * 8 + 50
    first = (tmp_path / "s.jsonl").read_text().splitlines()[0]
    assert first.startswith('{"x": [') and first.endswith(f'"y": {int(y[0])}}}')


def test_sample_file_errors(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(ArgumentError):
        read_binary(tmp_path / "bad.bin")
    (tmp_path / "bad.jsonl").write_text('{"x": [1, 2], "y": 3}\n')
    with pytest.raises(ArgumentError):
        read_jsonl(tmp_path / "bad.jsonl")


def test_file_oracle_resamples():
    X, y = sample_clean(Halfspace.axis(2, 0.0), 30, seed=0)
    oracle = SampleFileOracle(X, y, seed=1)
    Xs, ys = oracle.sample(500)
    rows = {tuple(r) for r in X.tolist()}
    assert all(tuple(r) in rows for r in Xs.tolist())
    assert np.array_equal(oracle.clone(3).sample(5)[0], SampleFileOracle(X, y, seed=1).clone(3).sample(5)[0])
