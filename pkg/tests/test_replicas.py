import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from brwtree.cascade import all_patterns
from brwtree.errors import DomainError
from brwtree.field import ArrayField
from brwtree.gibbs import BETA_C, GibbsParams, build_table, sample_leaves
from brwtree.replicas import (
    EmpiricalOverlapMeasure,
    OverlapArray,
    average_overlap_law,
    fd_derivative_check,
    ggi_residual,
    ggi_residuals,
    ibp_check,
    is_ultrametric,
    mean_energy,
    mean_overlap,
    overlap_arrays,
    overlap_law_exact,
    parse_catalog,
)

FIXED3 = ArrayField([[0.0], [0.4, -1.2], [0.9, -0.3, 1.7, 0.2], [0.5, -0.8, 1.1, 0.0, -2.0, 0.6, 0.3, 1.4]])


def test_overlap_array_from_leaves():
    r = OverlapArray.from_leaves([0, 1, 4, 0], 3)
    assert r.n == 4
    assert np.all(np.diag(r.values) == 1)
    assert r.values[0, 1] == pytest.approx(2 / 3)
    assert r.values[0, 2] == 0
    assert r.values[0, 3] == 1
    assert r.is_symmetric() and r.is_ultrametric()
    with pytest.raises(DomainError):
        OverlapArray(np.ones((1, 1)))


def test_non_ultrametric_array_detected():
    r = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
    assert not is_ultrametric(r)


def test_overlap_law_uniform_limit():
    n = 10
    law = overlap_law_exact(build_table(GibbsParams.of(n, 1e-12, 3)))
    assert np.allclose(law.tail(), 2.0 ** -np.arange(n + 1), atol=1e-6)
    assert mean_overlap(build_table(GibbsParams.of(n, 1e-12, 3))) == pytest.approx((1 - 2.0**-n) / n, abs=1e-6)


def test_overlap_law_matches_pair_enumeration():
    beta = 1.7
    t = build_table(GibbsParams.of(3, beta, 0), FIXED3)
    energies = oracles.leaf_energies(FIXED3)
    law = oracles.overlap_law(energies, beta, 3)
    assert np.allclose(overlap_law_exact(t).masses, law, rtol=0, atol=1e-10)
    assert mean_overlap(t) == pytest.approx(law @ (np.arange(4) / 3), abs=1e-10)
    g = oracles.gibbs_weights(energies, beta)
    assert mean_energy(t) == pytest.approx(g @ energies, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**64 - 1), st.floats(0.05, 6.0))
def test_overlap_law_invariants(n, seed, beta):
    t = build_table(GibbsParams.of(n, beta, seed))
    law = overlap_law_exact(t)
    assert abs(law.masses.sum() - 1) < 1e-12
    assert np.all(np.diff(law.tail()) <= 1e-15)
    assert abs(mean_overlap(t) - law.mean()) < 1e-12


def test_measure_interval_conventions():
    m = EmpiricalOverlapMeasure(np.array([0, 0.25, 0.5, 0.75, 1.0]), np.array([0.2, 0.1, 0.1, 0.1, 0.5]))
    assert m.mass(0.25, 0.75) == pytest.approx(0.1)
    assert m.mass(0.75, 1.0, closed="both") == pytest.approx(0.6)
    assert m.mass(0.25, 0.75, closed="left") == pytest.approx(0.2)
    assert m.moment(2) == pytest.approx(0.1 / 16 + 0.1 / 4 + 0.1 * 9 / 16 + 0.5)
    with pytest.raises(DomainError):
        EmpiricalOverlapMeasure(np.array([0, 1.0]), np.array([0.5, 0.6]))


def test_sampled_arrays_are_ultrametric():
    t = build_table(GibbsParams.of(12, 3.0, 17))
    leaves = sample_leaves(t, 2000 * 5, np.random.default_rng(0)).reshape(2000, 5)
    r = overlap_arrays(leaves, 12)
    assert is_ultrametric(r)
    assert np.all(r == np.swapaxes(r, 1, 2))
    assert np.all(np.round(r * 12) == r * 12)


def test_replica_exchangeability():
    # moments of R_12 and R_34 (disjoint relabelings) agree within stderr
    t = build_table(GibbsParams.of(10, 2.0, 5))
    leaves = sample_leaves(t, 40_000 * 4, np.random.default_rng(1)).reshape(40_000, 4)
    r = overlap_arrays(leaves, 10)
    a, b = r[:, 0, 1], r[:, 2, 3]
    se = np.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(a.mean() - b.mean()) < 3 * se
    # the exact law agrees with the sampled first moment
    assert abs(a.mean() - mean_overlap(t)) < 3 * a.std() / np.sqrt(a.size)


@pytest.mark.parametrize("beta", [0.5, 2.5])
def test_ibp_identity(beta):
    res = ibp_check(12, beta, 200, 2024)
    assert res.stderr > 0
    assert abs(res.lhs - res.rhs) < 3 * res.stderr
    assert not res.degenerate


def test_ibp_degenerate_field():
    n = 6
    res = ibp_check(n, 1.0, 3, 0, oracle_factory=lambda seed: ArrayField.zeros(n))
    assert res.degenerate
    assert res.lhs == 0
    assert res.rhs == pytest.approx(1 - (1 - 2.0**-n) / n, abs=1e-12)


def test_fd_grid_validation():
    with pytest.raises(DomainError):
        fd_derivative_check([0.4, 0.5], 6, 10, 0)
    with pytest.raises(DomainError):
        fd_derivative_check([0.5, 0.4, 0.6], 6, 10, 0)


@pytest.mark.parametrize("grid", [(0.4, 0.5, 0.6), (BETA_C - 0.1, BETA_C, BETA_C + 0.1)])
def test_fd_derivative_identity(grid):
    (row,) = fd_derivative_check(grid, 14, 60, 9)
    # the O(h^2) allowance is the measured central-difference bias against the exact derivative
    assert abs(row.discrepancy) < 3 * row.stderr + abs(row.fd_bias) + 3 * row.fd_bias_stderr
    assert abs(row.fd_bias) < 0.01


def test_fd_bias_shrinks_quadratically():
    wide = fd_derivative_check([0.8, 1.0, 1.2], 10, 200, 4)[0]
    narrow = fd_derivative_check([0.9, 1.0, 1.1], 10, 200, 4)[0]
    assert 3.0 < wide.fd_bias / narrow.fd_bias < 5.0


def test_catalog_parsing():
    r = np.array([[1.0, 0.5, 0.25], [0.5, 1.0, 0.75], [0.25, 0.75, 1.0]])
    assert parse_catalog("1")(r) == 1
    assert parse_catalog("R12^2*R13")(r) == pytest.approx(0.0625)
    assert parse_catalog("R23")(r) == 0.75
    assert parse_catalog("R13").arity == 3
    assert parse_catalog("pattern:{1,2}{3}")(np.array([[1, 0.6, 0.1], [0.6, 1, 0.2], [0.1, 0.2, 1]])) == 1
    assert parse_catalog("pattern:{1,2}{3}")(r) == 0
    for bad in ("R11", "sin", "R1", "pattern:{1,2}{2}"):
        with pytest.raises(DomainError):
            parse_catalog(bad)


def test_ggi_catalog_arity_checked():
    with pytest.raises(DomainError):
        ggi_residual(6, 1.0, 2, 1, "R13", 4, 10, 0)
    with pytest.raises(DomainError):
        ggi_residual(6, 1.0, 2, 1, "bogus", 4, 10, 0)
    with pytest.raises(DomainError):
        ggi_residual(6, 1.0, 1, 1, "1", 4, 10, 0)


def test_ggi_constant_function_is_exchangeability():
    res = ggi_residual(10, 2 * BETA_C, 2, 1, "1", 100, 200, 3)
    assert res.residual == pytest.approx(res.lhs - res.rhs)
    assert abs(res.residual) < 3 * res.stderr


def test_ggi_power_difference_bounded_by_intermediate_mass():
    n, beta = 12, 2 * BETA_C
    p1, p2 = ggi_residuals(n, beta, [(2, 1, "R12"), (2, 2, "R12")], 100, 300, 8)
    mid = average_overlap_law(n, beta, 100, 8)[0].mass(0.0, 1.0)
    # R^2 - R vanishes on {0, 1} and is at most 1/4 in between
    assert abs(p2.residual - p1.residual) < mid + 3 * np.hypot(p1.stderr, p2.stderr)


def test_ggi_terms_reproducible():
    a = ggi_residual(8, 1.0, 3, 2, "R12*R23", 10, 50, 1)
    b = ggi_residual(8, 1.0, 3, 2, "R12*R23", 10, 50, 1)
    assert a == b


def test_pattern_indicators_partition_unity():
    # over all set partitions of 3 replicas the thresholded indicators sum to one per sample
    t = build_table(GibbsParams.of(8, 2.0, 2))
    leaves = sample_leaves(t, 500 * 3, np.random.default_rng(0)).reshape(500, 3)
    r = overlap_arrays(leaves, 8)
    total = sum(parse_catalog(f"pattern:{p}")(r) for p in all_patterns(3))
    assert np.all(total == 1)


def test_overlap_arrays_match_pairwise_oracle():
    leaves = np.array([[0, 5, 7, 255], [3, 3, 128, 129]])
    r = overlap_arrays(leaves, 8)
    for k, (i, j) in itertools.product(range(2), itertools.product(range(4), repeat=2)):
        assert r[k, i, j] == oracles.common_depth(leaves[k, i], leaves[k, j], 8) / 8
