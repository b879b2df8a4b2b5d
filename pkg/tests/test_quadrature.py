import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perquad.kernels import KernelApprox
from perquad.quadrature import (
    QuadratureRule,
    equispaced_error_sq,
    equispaced_rule,
    lattice_nodes,
    optimal_weights,
    optimize_nodes,
    rule_from_csv,
    rule_to_csv,
    worst_case_error_sq,
)
from perquad.spectra import Explicit, Geometric, IsotropicLog, truncate_at

from . import oracles


class TestWorstCase:
    def test_empty_rule(self, geo_kernel):
        e = worst_case_error_sq(QuadratureRule.empty(), geo_kernel)
        assert e.lo == e.hi == e.value == 1.0

    def test_zero_weights(self, geo_kernel):
        e = worst_case_error_sq(QuadratureRule([0.1, 0.6], [0, 0]), geo_kernel)
        assert e.lo == e.hi == 1.0

    def test_single_node(self, geo_kernel):
        e = worst_case_error_sq(QuadratureRule([0.0], [1 / 3]), geo_kernel)
        assert e.contains(2 / 3)
        assert e.width < 1e-13

    def test_brute_force_weight_scan(self, geo_kernel):
        ws = np.linspace(0, 1, 1001)
        errs = [worst_case_error_sq(QuadratureRule([0.4], [w]), geo_kernel).value for w in ws]
        assert ws[int(np.argmin(errs))] == pytest.approx(1 / 3, abs=1e-3)

    def test_breakdown_adds_up(self, geo_kernel):
        e = worst_case_error_sq(QuadratureRule([0.1, 0.5, 0.8], [0.2, 0.3 - 0.1j, 0.25]), geo_kernel)
        assert e.norm_h_sq + e.cross_term + e.quadratic_term == pytest.approx(e.value, abs=1e-15)

    def test_against_loop_oracle(self, geo_kernel, rng):
        x, a = rng.random(5), rng.random(5) + 1j * rng.random(5)
        e = worst_case_error_sq(QuadratureRule(x, a), geo_kernel)
        table = {k: oracles.geometric(k) for k in range(-120, 121)}
        assert e.contains(oracles.wce_direct(table, x, a), 1e-12)

    def test_truncation_slack_covers_true_value(self, rng):
        spec = Geometric(1, 2)
        small = KernelApprox.from_truncation(truncate_at(spec, 5))
        big = KernelApprox.from_truncation(truncate_at(spec, 100))
        rule = QuadratureRule(rng.random(4), rng.random(4))
        e_small, e_big = worst_case_error_sq(rule, small), worst_case_error_sq(rule, big)
        assert e_small.lo <= e_big.value <= e_small.hi

    def test_dimension_mismatch(self, geo_kernel):
        with pytest.raises(ValueError):
            worst_case_error_sq(QuadratureRule(np.zeros((2, 2)), [1, 1]), geo_kernel)


class TestOptimalWeights:
    @pytest.mark.parametrize("x", [0.0, 0.37])
    def test_single_node(self, geo_kernel, x):
        a, e = optimal_weights([x], geo_kernel)
        assert a[0] == pytest.approx(1 / 3, abs=1e-15)
        assert e.contains(2 / 3)

    def test_duplicate_node_degenerate(self, geo_kernel):
        a, e = optimal_weights([0.2, 0.2], geo_kernel)
        assert e.degenerate
        assert e.value == pytest.approx(2 / 3, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 8])
    def test_equispaced_matches_closed_form(self, geo, geo_kernel, n):
        _, e = optimal_weights(np.arange(n) / n, geo_kernel)
        c = equispaced_error_sq(n, geo, weights="optimal")
        assert e.lo - 1e-14 <= c.hi and c.lo <= e.hi + 1e-14

    def test_border_optimal_beats_equal(self, border):
        K = KernelApprox.from_truncation(border)
        n = 16
        _, opt = optimal_weights(np.arange(n) / n, K)
        eq = worst_case_error_sq(equispaced_rule(n), K)
        assert opt.value <= eq.value

    def test_ridge(self, geo_kernel):
        a0, _ = optimal_weights([0.1, 0.6], geo_kernel)
        a1, _ = optimal_weights([0.1, 0.6], geo_kernel, ridge=1.0)
        assert np.sum(np.abs(a1)) < np.sum(np.abs(a0))
        with pytest.raises(ValueError):
            optimal_weights([0.1], geo_kernel, ridge=-1)

    def test_empty_rejected(self, geo_kernel):
        with pytest.raises(ValueError):
            optimal_weights(np.zeros((0, 1)), geo_kernel)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_optimality_under_perturbation(n, seed):
    K = KernelApprox.from_truncation(truncate_at(Geometric(1, 2), 60))
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    a, e = optimal_weights(x, K)
    if e.degenerate:
        return
    for _ in range(100):
        scale = 10.0 ** rng.uniform(-6, 0)
        b = a + scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        assert worst_case_error_sq(QuadratureRule(x, b), K).value >= e.value * (1 - 1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 8), st.integers(0, 2**32 - 1))
def test_error_range(n, seed):
    K = KernelApprox.from_truncation(truncate_at(Geometric(1, 2), 60))
    rng = np.random.default_rng(seed)
    rule = QuadratureRule(rng.random(n), rng.standard_normal(n) / max(n, 1))
    e = worst_case_error_sq(rule, K)
    assert 0 <= e.lo <= e.hi
    a, e2 = optimal_weights(rng.random(max(n, 1)), K)
    assert e2.value <= K.lambda0 + e2.rounding_slack + e2.truncation_slack


class TestEquispaced:
    def test_geometric_n2(self, geo):
        assert equispaced_error_sq(2, geo).contains(2 / 3)

    def test_geometric_optimal_n2(self, geo):
        assert equispaced_error_sq(2, geo, weights="optimal").contains(0.4)

    @pytest.mark.parametrize("n", [1, 3, 17])
    def test_delta_zero(self, n):
        e = equispaced_error_sq(n, truncate_at(Explicit.delta()))
        assert e.value == 0.0 and e.lo == 0.0 and e.hi < 1e-14

    def test_border_1024_cross_path(self, border):
        K = KernelApprox.from_truncation(border)
        n = 1024
        general = worst_case_error_sq(equispaced_rule(n), K)
        closed = equispaced_error_sq(n, border)
        assert general.lo <= closed.value <= general.hi

    @pytest.mark.parametrize("n", [1, 2, 5, 9])
    def test_paths_agree_multivariate(self, iso2, n):
        K = KernelApprox.from_truncation(iso2)
        general = worst_case_error_sq(equispaced_rule(n, 2), K)
        closed = equispaced_error_sq(n, iso2, d=2)
        assert general.lo <= closed.hi and closed.lo <= general.hi

    def test_scalar_weight(self, geo):
        e = equispaced_error_sq(2, geo, weights=0.5)
        assert e.contains(2 / 3)
        e = equispaced_error_sq(2, geo, weights=0.0)
        assert e.contains(1.0)

    def test_dimension_check(self, geo):
        with pytest.raises(ValueError):
            equispaced_error_sq(2, geo, d=2)
        with pytest.raises(ValueError):
            equispaced_error_sq(0, geo)


class TestOptimize:
    def test_single_node(self, geo_kernel):
        rule, e = optimize_nodes(1, geo_kernel, restarts=2, seed=0, budget=3)
        assert e.contains(2 / 3, 1e-12)

    def test_two_nodes_beats_equispaced(self, geo, geo_kernel):
        _, e = optimize_nodes(2, geo_kernel, restarts=3, seed=1, budget=10)
        assert e.value <= equispaced_error_sq(2, geo, weights="optimal").hi + 1e-14

    def test_deterministic(self, iso2):
        K = KernelApprox.from_truncation(iso2)
        r1, e1 = optimize_nodes(4, K, restarts=3, seed=7, budget=4)
        r2, e2 = optimize_nodes(4, K, restarts=3, seed=7, budget=4, jobs=3)
        assert np.array_equal(r1.nodes, r2.nodes) and e1.value == e2.value

    def test_monotone_in_n(self, geo_kernel):
        prev = None
        vals = []
        for n in range(1, 6):
            init = None if prev is None else np.vstack([prev.nodes, [[(prev.nodes[0, 0] + 0.5 / n) % 1]]])
            prev, e = optimize_nodes(n, geo_kernel, restarts=2, seed=3, budget=8, init=init)
            vals.append(e.value)
        assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))

    def test_n_zero(self, geo_kernel):
        rule, e = optimize_nodes(0, geo_kernel)
        assert rule.n == 0 and e.value == 1.0

    def test_lattice(self):
        assert np.allclose(lattice_nodes(4, 1).ravel(), [0, 0.25, 0.5, 0.75])
        x = lattice_nodes(8, 2)
        assert x.shape == (8, 2) and len({tuple(r) for r in x.tolist()}) == 8


def test_rule_csv_roundtrip():
    rule = QuadratureRule(np.array([[0.1, 0.2], [0.3, 0.4]]), [1 / 3, 0.5 - 0.25j])
    back = rule_from_csv(rule_to_csv(rule))
    assert np.array_equal(back.nodes, rule.nodes) and np.array_equal(back.weights, rule.weights)
