import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perquad.kernels import KernelApprox
from perquad.quadrature import optimal_weights, optimize_nodes
from perquad.schur_bounds import (
    BoundReport,
    CertificateError,
    applicable_bounds,
    bound_analytic,
    bound_convolution_square,
    bound_curse_Fd2,
    bound_norm_decreasing,
    bound_rn_multivariate,
    bound_sum_of_squares,
    bound_univariate,
    compute_bound,
    radius_rn,
)
from perquad.spectra import (
    BorderUnivariate,
    Explicit,
    Geometric,
    IsotropicLog,
    MixedLog,
    convolution_square,
    truncate_at,
)

from . import oracles

MU = Explicit([[-1], [0], [1]], [1.0, 1.0, 1.0])


class TestSumOfSquares:
    def test_examples(self):
        assert bound_sum_of_squares(1.0, 3.0, 0) == 1.0
        assert bound_sum_of_squares(1.0, 3.0, 1) == pytest.approx(2 / 3, rel=1e-15)
        assert bound_sum_of_squares(1.0, 3.0, 3) == 0.0
        assert bound_sum_of_squares(1.0, 3.0, 10) == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            bound_sum_of_squares(1.0, 0.0, 1)


class TestConvolutionSquare:
    def test_hand_example(self):
        tr = truncate_at(convolution_square(MU))
        assert bound_convolution_square(tr, 1).value == pytest.approx(2.0, rel=1e-14)

    def test_n_zero_and_clamp(self):
        tr = truncate_at(convolution_square(MU))
        assert bound_convolution_square(tr, 0).value == pytest.approx(3.0, rel=1e-14)
        assert bound_convolution_square(tr, 3).value == 0.0

    def test_explicit_factors_argument(self):
        lam = convolution_square(MU)
        plain = Explicit(lam.points, lam.table)
        rep = bound_convolution_square(truncate_at(plain), 1, factors=[MU])
        assert rep.value == pytest.approx(2.0, rel=1e-14)
        with pytest.raises(CertificateError):
            bound_convolution_square(truncate_at(plain), 1)
        with pytest.raises(CertificateError):
            bound_convolution_square(truncate_at(plain), 1, factors=[Explicit([[0], [1]], [1.0, 1.0])])

    def test_tight_at_one_node(self):
        lam = convolution_square(Explicit([[-2], [0], [1], [3]], [0.5, 1.0, 0.25, 0.1]))
        tr = truncate_at(lam)
        K = KernelApprox.from_truncation(tr)
        _, e = optimal_weights([0.0], K)
        b = bound_convolution_square(tr, 1)
        assert b.value == pytest.approx(e.value, rel=1e-13)

    def test_minorant_certificate(self, geo):
        from perquad.spectra import convolution_square_minorant

        nu = convolution_square_minorant(geo)
        rep = bound_convolution_square(truncate_at(nu), 1)
        assert 0 < rep.value <= 1.0

    def test_json_roundtrip(self):
        rep = bound_convolution_square(truncate_at(convolution_square(MU)), 1)
        back = BoundReport.from_json(rep.to_json())
        assert back.value == rep.value and back.bound_name == rep.bound_name
        assert json.loads(rep.to_json())["ingredients"]["ell1"] == [9.0, 9.0]


class TestNormDecreasing:
    def test_geometric(self, geo):
        assert bound_norm_decreasing(geo, 1).value == pytest.approx(0.25, rel=1e-13)
        assert bound_norm_decreasing(geo, 1).value <= 0.25

    def test_n_zero(self, geo):
        assert bound_norm_decreasing(geo, 0).value == pytest.approx(1.0, rel=1e-14)

    def test_iso_below_witness(self, iso2):
        b = bound_norm_decreasing(iso2, 1).value
        _, e = optimize_nodes(1, KernelApprox.from_truncation(iso2), restarts=1, budget=1)
        assert 0 < b < e.lo

    def test_rejects_mixed(self, mixed2):
        with pytest.raises(ValueError):
            bound_norm_decreasing(mixed2, 1)


class TestRadius:
    @pytest.mark.parametrize("n", [1, 2, 5, 17, 100])
    def test_univariate(self, n):
        assert radius_rn(n, "l2", 1) == 4 * n - 2

    def test_sup_norm(self):
        assert radius_rn(2, "linf", 2) == 2.0

    def test_brute_force(self):
        for n in range(1, 12):
            for norm, d in [("l2", 2), ("l1", 2), ("l2", 3)]:
                r = radius_rn(n, norm, d)
                ax = np.arange(-20, 21)
                g = np.stack(np.meshgrid(*([ax] * d)), -1).reshape(-1, d) * 2
                v = {"l2": np.linalg.norm(g, axis=1), "l1": np.abs(g).sum(1)}[norm]
                assert np.sum(v <= r + 1e-12) >= 4 * n - 1
                assert np.sum(v < r - 1e-12) < 4 * n - 1

    def test_invalid(self):
        with pytest.raises(ValueError):
            radius_rn(0, "l2", 1)


class TestRnAndUnivariate:
    def test_geometric_univariate(self, geo):
        b = bound_univariate(geo, 1)
        assert b.value == pytest.approx(1 / 64, rel=1e-12) and b.value <= 1 / 64

    def test_border_univariate_n1(self, border):
        b = bound_univariate(border, 1)
        assert 0 < b.value <= oracles.BORDER_TAIL_4 / 8
        assert b.value == pytest.approx(oracles.BORDER_TAIL_4 / 8, rel=0.01)

    def test_delta(self):
        d = truncate_at(Explicit.delta())
        assert bound_univariate(d, 1).value == 0.0
        assert bound_rn_multivariate(d, 1).value == 0.0

    def test_rn_vs_univariate_border(self, border):
        u = bound_univariate(border, 4).value
        r = bound_rn_multivariate(border, 4).value
        # the r_n sum runs over even k only and both signs; it estimates the same tail
        assert r == pytest.approx(u, rel=0.1)

    def test_rn_iso(self, iso2):
        b = bound_rn_multivariate(iso2, 4)
        assert 0 < b.value <= iso2.lambda0 / 2

    def test_non_monotone_rejected(self):
        bad = truncate_at(Explicit([[-2], [-1], [0], [1], [2]], [1.0, 0.1, 1.0, 0.1, 1.0]))
        with pytest.raises(ValueError):
            bound_univariate(bad, 1)

    def test_mixed_axis_restriction(self, mixed2):
        b = bound_univariate(mixed2, 2)
        assert "applied to axis restriction" in b.flags
        assert 0 < b.value <= 0.5

    @pytest.mark.parametrize("c,omega", [(1.0, 2.0), (2.0, 3.0), (0.5, 1.5)])
    def test_analytic_matches_univariate(self, c, omega):
        tr = truncate_at(Geometric(c, omega), 300)
        for n in range(1, 9):
            u = bound_univariate(tr, n).value
            a = bound_analytic(c, omega, n)
            assert u == pytest.approx(a, rel=1e-12)


class TestAnalyticAndCurse:
    def test_analytic_examples(self):
        assert bound_analytic(1, 2, 1) == 1 / 64
        assert bound_analytic(2, 2, 1) == 1 / 32
        vals = [bound_analytic(1, 2, n) for n in range(1, 20)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_curse(self):
        assert bound_curse_Fd2(1, 2, 2) == 0.5
        assert bound_curse_Fd2(1, 3, 2) is None
        assert bound_curse_Fd2(2, 10000, 10) == 0.25
        with pytest.raises(ValueError):
            bound_curse_Fd2(float("inf"), 1, 2)


class TestDispatch:
    def test_applicable(self):
        assert applicable_bounds(Geometric(1, 2)) == ("norm-decreasing", "rn", "univariate", "analytic")
        assert applicable_bounds(MixedLog(2, 1)) == ("univariate",)
        assert "convolution-square" in applicable_bounds(convolution_square(MU))

    def test_inapplicable(self, mixed2):
        with pytest.raises(ValueError, match="not applicable"):
            compute_bound("rn", mixed2, 1)

    def test_report_validation(self):
        with pytest.raises(ValueError):
            BoundReport("x", 1, 2.0, 1.0)


@pytest.mark.parametrize("spec,radius", [
    (Geometric(1, 2), 30), (BorderUnivariate(1.0), 200), (IsotropicLog(2, 1.0), 10), (MixedLog(2, 1.0), 100),
])
def test_safe_direction_monotone(spec, radius):
    small, big = truncate_at(spec, radius), truncate_at(spec, 3 * radius)
    for name in applicable_bounds(spec):
        for n in (1, 2, 4):
            assert compute_bound(name, small, n).value <= compute_bound(name, big, n).value * (1 + 1e-12) + 1e-300


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["geo", "border", "iso"]), st.integers(1, 6))
def test_bounds_below_witness(which, n):
    spec, R = {"geo": (Geometric(1, 2), 60), "border": (BorderUnivariate(1.0), 512),
               "iso": (IsotropicLog(2, 1.0), 16)}[which]
    tr = truncate_at(spec, R)
    K = KernelApprox.from_truncation(tr)
    _, e = optimize_nodes(n, K, restarts=1, budget=2)
    for name in applicable_bounds(spec):
        assert compute_bound(name, tr, n).value <= e.hi
