import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from underbag.errors import ConfigurationError
from underbag.prox import (CrossEntropyLoss, LossSide, prox_loss,
                           prox_loss_dh, prox_loss_with_dh, prox_ridge)

RNG = np.random.default_rng(20240817)


def golden_section(f, lo, hi, tol=1e-13):
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    while abs(b - a) > tol:
        if f(c) < f(d):
            b, d = d, c
            c = b - invphi * (b - a)
        else:
            a, c = c, d
            d = a + invphi * (b - a)
    return 0.5 * (a + b)


class TestLossPair:
    def test_values_match_logistic_forms(self):
        x = np.linspace(-30, 30, 101)
        assert np.allclose(CrossEntropyLoss.value(x, LossSide.PLUS),
                           np.log1p(np.exp(-np.clip(x, -700, 700))), rtol=1e-12)
        assert np.allclose(CrossEntropyLoss.value(x, LossSide.MINUS),
                           CrossEntropyLoss.value(-x, LossSide.PLUS))

    def test_overflow_safe_far_out(self):
        for side in LossSide:
            v = CrossEntropyLoss.value(np.array([-800.0, 800.0]), side)
            assert np.isfinite(v).all()

    @given(st.floats(-30, 30))
    @settings(max_examples=200, deadline=None)
    def test_derivative_bounds(self, x):
        for side in LossSide:
            assert abs(CrossEntropyLoss.d1(x, side)) < 1.0
            d2 = CrossEntropyLoss.d2(x, side)
            assert 0.0 < d2 <= 0.25 + 1e-15

    def test_derivative_saturation_far_out(self):
        # float64 rounds the sigmoid to exactly 0/1 beyond ~|x| = 37
        x = np.array([-500.0, -37.5, 37.5, 500.0])
        for side in LossSide:
            assert (np.abs(CrossEntropyLoss.d1(x, side)) <= 1.0).all()
            assert (CrossEntropyLoss.d2(x, side) >= 0.0).all()


class TestProxRidge:
    def test_zero_field(self):
        assert prox_ridge(0.0, 2.0, 1.0) == 0.0

    def test_closed_form(self):
        assert prox_ridge(3.0, 2.0, 1.0) == pytest.approx(1.0, abs=0)

    def test_matches_golden_section(self):
        # float64 golden section localizes the argmin to ~sqrt(eps); the
        # objective values agree far tighter
        h, q_hat, lam = 1.7, 0.4, 0.1

        def objective(w):
            return 0.5 * q_hat * w * w - h * w + 0.5 * lam * w * w

        w_star = golden_section(objective, -10, 10)
        w_prox = prox_ridge(h, q_hat, lam)
        assert w_prox == pytest.approx(w_star, abs=1e-6)
        assert objective(w_prox) <= objective(w_star) + 1e-10

    def test_randomized_against_minimization(self):
        for _ in range(50):
            h = RNG.normal(scale=3)
            q_hat = RNG.uniform(0.01, 5)
            lam = RNG.uniform(0.001, 2)

            def objective(w):
                return 0.5 * (q_hat + lam) * w * w - h * w

            w_star = golden_section(objective, -50, 50)
            w_prox = prox_ridge(h, q_hat, lam)
            assert w_prox == pytest.approx(w_star, abs=1e-6)
            assert objective(w_prox) <= objective(w_star) + 1e-10

    def test_rejects_degenerate_denominator(self):
        with pytest.raises(ConfigurationError):
            prox_ridge(1.0, -1.0, 1.0)


class TestProxLoss:
    def test_zero_coefficient(self):
        for h in (-5.0, 0.0, 17.3):
            assert prox_loss(h, 0.0, 1.0, LossSide.PLUS) == 0.0

    def test_deep_margin_flat(self):
        u = prox_loss(50.0, 1.0, 1.0, LossSide.PLUS)
        assert abs(u) < 1e-8

    def test_symmetric_point_bisection_oracle(self):
        # stationarity u = sigmoid(-u) at h=0, c=1, scale=1 (PLUS side)
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if mid - 1.0 / (1.0 + math.exp(mid)) < 0:
                lo = mid
            else:
                hi = mid
        u_ref = 0.5 * (lo + hi)
        assert u_ref == pytest.approx(0.4011, abs=2e-4)
        assert prox_loss(0.0, 1.0, 1.0, LossSide.PLUS) == pytest.approx(u_ref, abs=1e-8)

    def test_stationarity_residual_contract(self):
        h = RNG.normal(scale=20, size=500)
        for c, scale in ((1.0, 1.0), (2.5, 5.6), (0.1, 0.01), (7.0, 30.0)):
            for side in LossSide:
                u = prox_loss(h, c, scale, side)
                res = u / scale + c * CrossEntropyLoss.d1(u + h, side)
                assert np.abs(res).max() < 1e-10

    @given(st.floats(-40, 40), st.floats(0.01, 8.0), st.floats(0.01, 50.0))
    @settings(max_examples=150, deadline=None)
    def test_local_minimum_property(self, h, c, scale):
        for side in LossSide:
            u = prox_loss(h, c, scale, side)

            def objective(t):
                return t * t / (2 * scale) + c * float(
                    CrossEntropyLoss.value(t + h, side))

            assert objective(u) <= objective(u + 1e-3) + 1e-12
            assert objective(u) <= objective(u - 1e-3) + 1e-12

    @given(st.floats(-40, 40), st.floats(0.0, 8.0), st.floats(0.01, 50.0))
    @settings(max_examples=150, deadline=None)
    def test_shifted_point_monotone(self, h, c, scale):
        # d(u* + h)/dh in [0, 1]
        for side in LossSide:
            du = prox_loss_dh(h, c, scale, side)
            assert -1.0 - 1e-12 <= du <= 1e-12


class TestProxLossDerivative:
    def test_zero_coefficient_zero_derivative(self):
        assert prox_loss_dh(1.3, 0.0, 1.0, LossSide.MINUS) == 0.0

    def test_finite_difference_oracle_center(self):
        eps = 1e-5
        u_p = prox_loss(eps, 1.0, 1.0, LossSide.PLUS)
        u_m = prox_loss(-eps, 1.0, 1.0, LossSide.PLUS)
        fd = (u_p - u_m) / (2 * eps)
        du = prox_loss_dh(0.0, 1.0, 1.0, LossSide.PLUS)
        assert du == pytest.approx(fd, rel=1e-5)

    def test_finite_difference_randomized(self):
        # acceptance-grade check: 1e3 random inputs, rel err < 1e-5.
        # inputs are drawn where the prox is active; far in the flat tail
        # |du| ~ 1e-8 and a double-precision difference quotient is pure
        # roundoff, so nothing can be verified there at this tolerance
        n = 1000
        h = RNG.uniform(-3, 3, size=n)
        c = RNG.uniform(0.5, 3.0, size=n)
        scale = RNG.uniform(0.5, 5.0, size=n)
        eps = 1e-5
        for side in LossSide:
            worst = 0.0
            for i in range(n):
                du = prox_loss_dh(h[i], c[i], float(scale[i]), side)
                fd = (prox_loss(h[i] + eps, c[i], float(scale[i]), side)
                      - prox_loss(h[i] - eps, c[i], float(scale[i]), side)) / (2 * eps)
                worst = max(worst, abs(du - fd) / abs(fd))
            assert worst < 1e-5

    def test_tail_derivative_against_richardson(self):
        # deep-margin inputs: compare against an extrapolated quotient
        for h, c, scale in ((-21.1, 0.62, 5.05), (18.0, 2.0, 3.0)):
            du = prox_loss_dh(h, c, scale, LossSide.PLUS)
            e1, e2 = 1e-3, 5e-4
            f1 = (prox_loss(h + e1, c, scale, LossSide.PLUS)
                  - prox_loss(h - e1, c, scale, LossSide.PLUS)) / (2 * e1)
            f2 = (prox_loss(h + e2, c, scale, LossSide.PLUS)
                  - prox_loss(h - e2, c, scale, LossSide.PLUS)) / (2 * e2)
            rich = (4 * f2 - f1) / 3
            assert du == pytest.approx(rich, rel=1e-3)

    def test_with_dh_consistency(self):
        h = RNG.normal(scale=5, size=200)
        u1, du1 = prox_loss_with_dh(h, 1.7, 2.2, LossSide.MINUS)
        assert np.allclose(u1, prox_loss(h, 1.7, 2.2, LossSide.MINUS), atol=0)
        assert np.allclose(du1, prox_loss_dh(h, 1.7, 2.2, LossSide.MINUS), atol=0)
