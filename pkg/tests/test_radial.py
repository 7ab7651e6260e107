import math

import numpy as np
import pytest
from scipy.integrate import quad

from driftlab.lorentz import DivergentNorm, LorentzIndex, lorentz_norm_radial
from driftlab.radial import (
    BALL_RADIUS,
    G_delta_eps,
    blowup_rate,
    counterexample_divergence,
    counterexample_drift,
    drift_membership,
    radial_residual,
    tabulate_solution,
    u_delta_eps,
)


class TestDriftProfile:
    def test_magnitude(self):
        prof = counterexample_drift(3, 2.0)
        r = 0.1
        assert prof(r) == pytest.approx(2.0 / (r * (-math.log(r))), rel=1e-12)

    def test_divergence_profile(self):
        # div(x/|x|^2 * delta/(-ln r)) for delta=1, n=3 via finite differences
        prof = counterexample_divergence(3)
        r0, h = 0.11, 1e-6

        def flux(r):
            # radial field magnitude times area factor r^(n-1)
            return counterexample_drift(3, 1.0)(r) * r**2

        div_fd = (flux(r0 + h) - flux(r0 - h)) / (2 * h) / r0**2
        assert prof(r0) == pytest.approx(div_fd, rel=1e-5)

    def test_membership_threshold(self):
        # the profile lies in L^{n,q} for q > 1 only
        assert drift_membership(3, 2.0) < math.inf
        with pytest.raises(DivergentNorm):
            drift_membership(3, 1.0)


class TestRadialNorms:
    def test_golden_value_n3_q2(self):
        prof = counterexample_drift(3, 1.0)
        got = lorentz_norm_radial(prof, LorentzIndex(3.0, 2.0), 3, BALL_RADIUS)
        want = math.sqrt(3.0) * (4.0 * math.pi / 3.0) ** (1.0 / 3.0)
        assert got == pytest.approx(want, abs=1e-4)

    def test_q1_diverges(self):
        prof = counterexample_drift(3, 1.0)
        with pytest.raises(DivergentNorm):
            lorentz_norm_radial(prof, LorentzIndex(3.0, 1.0), 3, BALL_RADIUS)

    @pytest.mark.parametrize("q", [1.25, 2.0, 4.0])
    def test_finite_above_one(self, q):
        prof = counterexample_drift(3, 1.0)
        val = lorentz_norm_radial(prof, LorentzIndex(3.0, q), 3, BALL_RADIUS)
        assert math.isfinite(val) and val > 0

    def test_scaling_in_delta(self):
        # the profile is linear in delta, so the norm is homogeneous
        a = lorentz_norm_radial(counterexample_drift(3, 1.0), LorentzIndex(3.0, 2.0), 3, BALL_RADIUS)
        b = lorentz_norm_radial(counterexample_drift(3, 3.0), LorentzIndex(3.0, 2.0), 3, BALL_RADIUS)
        assert b == pytest.approx(3.0 * a, rel=1e-8)


class TestClosedFormSolution:
    def test_G_quadrature_oracle(self):
        # cumulative source integral vs an independent fixed-order quadrature
        n, delta, eps = 3, 1.0, math.exp(-3)
        for rho in [0.02, 0.06, 0.2]:
            got = G_delta_eps(n, delta, eps, rho)
            m = min(rho, eps)
            ss = np.linspace(1e-12, m, 200001)
            vals = ss ** (n - 1) * (-np.log(ss)) ** delta
            oracle = float(np.trapezoid(vals, ss))
            assert got == pytest.approx(oracle, rel=1e-6)

    def test_G_constant_beyond_eps(self):
        n, delta, eps = 3, 2.0, math.exp(-3)
        assert G_delta_eps(n, delta, eps, 0.1) == pytest.approx(
            G_delta_eps(n, delta, eps, 0.3), rel=1e-14)

    def test_u_vanishes_at_boundary(self):
        u = u_delta_eps(3, 1.0, math.exp(-3), BALL_RADIUS)
        assert abs(u) < 1e-12

    def test_u_monotone_decreasing(self):
        rr = np.linspace(0.05, BALL_RADIUS * 0.98, 12)
        uu = [u_delta_eps(3, 1.0, math.exp(-3), float(r)) for r in rr]
        assert all(a >= b - 1e-14 for a, b in zip(uu, uu[1:]))

    def test_delta_zero_closed_form(self):
        # with no drift the source integral is m^n / n exactly
        n, eps = 3, math.exp(-2)
        for rho in [0.05, eps, 0.2]:
            m = min(rho, eps)
            assert G_delta_eps(n, 0.0, eps, rho) == pytest.approx(m**n / n, rel=1e-10)


class TestResidual:
    def _fixed_grid(self, num0):
        eps = math.exp(-2.0)
        h0 = BALL_RADIUS / num0
        base = np.linspace(6 * h0, BALL_RADIUS - 3 * h0, 30)
        return eps, base[np.abs(base - eps) > 3 * h0]

    def test_second_order_decay_with_drift(self):
        eps, r_grid = self._fixed_grid(120)
        res = [radial_residual(tabulate_solution(3, 1.0, eps, num, rtol=1e-10), r_grid)
               for num in (120, 240, 480)]
        rates = [math.log2(res[i] / res[i + 1]) for i in range(2)]
        assert all(abs(r - 2.0) <= 0.3 for r in rates)

    def test_no_drift_residual_is_noise(self):
        # centered differences are exact on the 1/r + const solution branches
        eps, r_grid = self._fixed_grid(120)
        res = radial_residual(tabulate_solution(3, 0.0, eps, 120, rtol=1e-10), r_grid)
        assert res < 1e-7


class TestBlowup:
    def test_rates_track_delta(self):
        eps = [math.exp(-k) for k in range(3, 8)]
        for delta in (0.0, 1.0):
            fit = blowup_rate(3, delta, (0.06, 0.3), eps)
            if delta == 0.0:
                assert abs(fit.slope) <= 0.05
            else:
                assert abs(fit.slope - delta) <= 0.1
                assert fit.r_squared >= 0.98

    def test_rejects_bad_annulus(self):
        with pytest.raises(ValueError):
            blowup_rate(3, 1.0, (0.3, 0.06), [math.exp(-3), math.exp(-4), math.exp(-5)])

    def test_rejects_eps_inside_annulus(self):
        with pytest.raises(ValueError):
            blowup_rate(3, 1.0, (0.05, 0.3), [0.1, 0.07, 0.06])
