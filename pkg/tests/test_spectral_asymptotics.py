import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perquad.spectra import Explicit, Geometric, IsotropicLog, MixedLog, truncate_at
from perquad.spectral_asymptotics import (
    CertificationError,
    approximation_numbers,
    certified_prefix,
    count_N,
    rate_fit,
    sigma_star,
)

from . import oracles


class TestApproximationNumbers:
    def test_geometric(self, geo):
        a = approximation_numbers(geo, 5)
        assert a[0] == 1.0
        assert a[1] == a[2] == pytest.approx(2**-0.5, rel=1e-15)
        assert a[3] == a[4] == 0.5

    def test_delta(self):
        tr = truncate_at(Explicit([[-1], [0], [1]], [0.0, 1.0, 0.0]))
        assert approximation_numbers(tr, 3).tolist() == [1.0, 0.0, 0.0]

    def test_too_many(self, geo):
        with pytest.raises(CertificationError) as exc:
            approximation_numbers(geo, len(geo.values) + 1)
        assert exc.value.safe_prefix <= len(geo.values)

    def test_certified_prefix_mixed(self, mixed2):
        safe = certified_prefix(mixed2)
        assert safe == len(mixed2.values)
        a = approximation_numbers(mixed2, safe)
        assert np.all(np.diff(a) <= 0)

    def test_iso_full_ball_certified(self, iso2):
        # every point outside the closed ball has norm > R, hence lam <= g(R)
        assert certified_prefix(iso2) == len(iso2.values)

    def test_mixed_rate_small_range(self):
        tr = truncate_at(MixedLog(2, 1.0), 3e5)
        a = approximation_numbers(tr, 2**14 + 1)
        ns = np.unique(np.round(2 ** np.arange(6, 14.01, 0.5)).astype(int))
        fit = rate_fit([(n, a[n]) for n in ns], fixed_a=0.5)
        assert fit.b == pytest.approx(1.0, abs=0.2)


class TestCount:
    def test_origin_only(self):
        for d in (1, 2, 3):
            assert count_N(1, d, 1.0) == 1
            assert count_N(1, d, 2.5) == 1

    def test_univariate_three(self):
        r = 2 * math.log(math.e + 1) ** 2
        assert count_N(r, 1, 1.0) == 3
        assert count_N(r * (1 - 1e-9), 1, 1.0) == 1

    @pytest.mark.parametrize("r", [3.0, 10.0, 57.5, 300.0, 1000.0])
    def test_against_brute_force(self, r):
        assert count_N(r, 2, 1.0) == oracles.count_direct(r, 2)
        assert count_N(r, 1, 1.0) == oracles.count_direct(r, 1)

    def test_three_dimensions(self):
        w = lambda k: (1 + abs(k)) * math.log(math.e + abs(k)) ** 2
        r = 200.0
        rng = range(-60, 61)
        want = sum(1 for a in rng for b in rng for c in rng if w(a) * w(b) * w(c) <= r * (1 + 1e-12))
        assert count_N(r, 3, 1.0) == want

    def test_matches_level_set(self, mixed2):
        # N(r, d) = #{k : lam_k >= 1/r}
        assert count_N(400, 2, 1.0) == len(mixed2.values)

    def test_bounded_ratio(self):
        rs = [10.0, 100.0, 1000.0, 10000.0]
        vals = [count_N(r, 2, 1.0) * math.log(math.e + r) ** 2 / r for r in rs]
        assert max(vals) / min(vals) <= 10

    def test_errors(self):
        with pytest.raises(ValueError):
            count_N(0.5, 2, 1.0)
        with pytest.raises(OverflowError):
            count_N(1e300, 2, 1.0)


class TestSigmaStar:
    def test_examples(self):
        assert sigma_star([1, 0, 0, 0], 1) == 0.0
        s = [2.0**-k for k in range(60)]
        assert sigma_star(s, 2) == pytest.approx(oracles.SIGMA_STAR_GEOMETRIC, rel=1e-14)

    def test_first_branch(self):
        assert sigma_star([0.1, 0.1, 0.1], 1) == 0.1

    def test_tail(self):
        assert sigma_star([1.0, 0.5], 1, tail=0.75) == 1.0
        assert sigma_star([1.0, 0.5], 2, tail=0.18) == pytest.approx(0.3)

    def test_errors(self):
        with pytest.raises(ValueError):
            sigma_star([0.5, 1.0], 1)
        with pytest.raises(ValueError):
            sigma_star([1.0], 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=40))
def test_sigma_star_non_increasing(xs):
    s = sorted(xs, reverse=True)
    vals = [sigma_star(s, n) for n in range(1, len(s) + 1)]
    assert all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(vals, vals[1:]))


class TestRateFit:
    def test_exact(self):
        pairs = [(2**k, 5 * 2 ** (-k / 2) / math.log(2**k)) for k in range(4, 17)]
        fit = rate_fit(pairs)
        assert fit.a == pytest.approx(0.5, abs=1e-6) and fit.b == pytest.approx(1.0, abs=1e-6)
        assert fit.C == pytest.approx(5.0, rel=1e-6)
        assert fit.residual_rms < 1e-10
        assert np.allclose(fit.predict([2**10]), 5 * 2**-5 / math.log(2**10))

    def test_noise(self):
        # log n and log log n are nearly collinear, so b is noisy; require 90% of seeds within 0.05
        ns = np.unique(np.round(2 ** np.arange(4, 16.01, 0.25)).astype(int))
        hits = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            pairs = [(n, 5 * n**-0.5 / math.log(n) * (1 + 0.01 * rng.standard_normal())) for n in ns]
            fit = rate_fit(pairs, drop_first_decade=False)
            hits += abs(fit.a - 0.5) < 0.05 and abs(fit.b - 1.0) < 0.05
        assert hits >= 45

    def test_constant(self):
        fit = rate_fit([(2**k, 3.0) for k in range(4, 17)])
        assert abs(fit.a) < 1e-9 and abs(fit.b) < 1e-9

    def test_fixed_a(self):
        pairs = [(2**k, 2 ** (-k / 2) * math.log(2**k) ** -0.7) for k in range(4, 17)]
        fit = rate_fit(pairs, fixed_a=0.5)
        assert fit.fixed_a and fit.a == 0.5 and fit.b == pytest.approx(0.7, abs=1e-9)

    def test_json(self):
        fit = rate_fit([(2**k, 2.0**-k) for k in range(4, 17)])
        d = json.loads(fit.to_json())
        assert set(d) >= {"C", "a", "b", "residual_rms", "n_min", "n_max", "stability_a"}

    def test_errors(self):
        with pytest.raises(ValueError):
            rate_fit([(10, 1.0)] * 3)
        with pytest.raises(ValueError):
            rate_fit([(2, 1.0)] * 10)
        with pytest.raises(ValueError):
            rate_fit([(100, 1.0)] * 10, drop_first_decade=False)
        with pytest.raises(ValueError):
            rate_fit([(16 * 2**k, -1.0) for k in range(8)])

    def test_drop_first_decade(self):
        pairs = [(2**k, 2.0**-k) for k in range(4, 17)]
        assert rate_fit(pairs).n_min >= 160
        assert rate_fit(pairs, drop_first_decade=False).n_min == 16


def test_isotropic_exponents():
    tr = truncate_at(IsotropicLog(2, 1.0), 400)
    safe = certified_prefix(tr)
    a = approximation_numbers(tr, safe)
    ns = np.unique(np.round(2 ** np.arange(6, math.log2(safe - 1), 0.25)).astype(int))
    fit = rate_fit([(n, a[n]) for n in ns], fixed_a=0.5)
    assert fit.b == pytest.approx(1.0, abs=0.25)
