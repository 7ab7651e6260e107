"""The logarithmic drift counterexample family and its radial solutions.

The drift field -delta * x / (r^2 ln r) on the ball of radius 1/e has
magnitude delta / (r (-ln r)).  It lies in L^{n,q} for every q > 1 but not
in L^{n,1}, and the explicit radial solutions u_{delta,eps} to

    -u'' - (n-1)/r u' - delta/(r ln r) u' = chi_{(0,eps)}

blow up like (-ln eps)^delta relative to the source mass eps^n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaincc, gamma as gamma_fn

from .lorentz import DivergentNorm, LorentzIndex, lorentz_norm_radial, unit_ball_volume

__all__ = [
    "RadialProfile",
    "RadialSolution",
    "BALL_RADIUS",
    "counterexample_drift",
    "counterexample_divergence",
    "G_delta_eps",
    "u_delta_eps",
    "tabulate_solution",
    "radial_residual",
    "blowup_rate",
    "BlowupFit",
]

BALL_RADIUS = math.exp(-1.0)


@dataclass(frozen=True)
class RadialProfile:
    """Scalar function of the radius on (0, R) with singularity metadata."""

    eval: object  # callable r -> float
    R: float
    singular_order: str = ""

    def __call__(self, r: float) -> float:
        if not (0.0 < r < self.R):
            raise ValueError(f"radius {r} outside (0, {self.R})")
        return self.eval(r)


def counterexample_drift(n: int, delta: float) -> RadialProfile:
    """Radial magnitude delta / (r (-ln r)) of the drift -delta x/(r^2 ln r)."""
    if delta < 0.0:
        raise ValueError("delta must be nonnegative")

    def mag(r: float) -> float:
        if delta == 0.0:
            return 0.0
        return delta / (r * (-math.log(r)))

    return RadialProfile(mag, BALL_RADIUS, singular_order="r^-1 log^-1")


def counterexample_divergence(n: int) -> RadialProfile:
    """div of the unit drift: (1 - (n-2) ln r) / (r^2 ln^2 r) on (0, 1/e)."""

    def dv(r: float) -> float:
        lr = math.log(r)
        return (1.0 - (n - 2) * lr) / (r * r * lr * lr)

    return RadialProfile(dv, BALL_RADIUS, singular_order="r^-2 log^-1")


def drift_membership(n: int, q: float | None) -> float:
    """L^{n,q} seminorm of the unit-strength drift magnitude; raises DivergentNorm at q=1."""
    return lorentz_norm_radial(counterexample_drift(n, 1.0), LorentzIndex(n, q), n, BALL_RADIUS)


def _G_closed(n: int, delta: float, m: float) -> float:
    # int_0^m s^{n-1}(-ln s)^delta ds = n^{-(delta+1)} Gamma(delta+1, -n ln m)
    if m <= 0.0:
        return 0.0
    a = -n * math.log(m)
    return float(n ** (-(delta + 1.0)) * gammaincc(delta + 1.0, a) * gamma_fn(delta + 1.0))


def G_delta_eps(n: int, delta: float, eps: float, rho: float, rtol: float = 1e-10) -> float:
    """Cumulative source integral int_0^{min(rho,eps)} s^{n-1}(-ln s)^delta ds.

    Adaptive quadrature at relative tolerance rtol; constant in rho beyond eps.
    """
    if not (0.0 < eps < BALL_RADIUS):
        raise ValueError(f"eps must lie in (0, {BALL_RADIUS})")
    if not (0.0 <= rho <= BALL_RADIUS + 1e-15):
        raise ValueError(f"rho must lie in [0, {BALL_RADIUS}]")
    m = min(rho, eps)
    if m == 0.0:
        return 0.0
    val, err = quad(
        lambda s: s ** (n - 1) * (-math.log(s)) ** delta, 0.0, m, epsrel=rtol, epsabs=0.0, limit=200
    )
    if val > 0.0 and err / val > 100.0 * rtol:
        raise ArithmeticError(f"quadrature reached relative error {err / val:.2e} > {rtol:.1e}")
    return float(val)


def u_delta_eps(n: int, delta: float, eps: float, r: float, rtol: float = 1e-8) -> float:
    """Radial solution value: int_r^{1/e} G_{delta,eps}(rho) rho^{1-n} (-ln rho)^{-delta} drho."""
    if not (0.0 < r < BALL_RADIUS) and not math.isclose(r, BALL_RADIUS):
        raise ValueError(f"r must lie in (0, {BALL_RADIUS}]")
    if r >= BALL_RADIUS:
        return 0.0

    def kernel(rho: float) -> float:
        return rho ** (1 - n) * (-math.log(rho)) ** (-delta)

    geps = _G_closed(n, delta, eps)
    total = 0.0
    if r < eps:
        # G varies below eps: nested adaptive quadrature
        inner, _ = quad(
            lambda rho: G_delta_eps(n, delta, eps, rho, rtol=1e-10) * kernel(rho),
            r,
            eps,
            epsrel=rtol,
            epsabs=0.0,
            limit=200,
        )
        total += inner
        lo = eps
    else:
        lo = r
    outer, _ = quad(lambda rho: geps * kernel(rho), lo, BALL_RADIUS, epsrel=rtol, epsabs=0.0, limit=200)
    return float(total + outer)


@dataclass(frozen=True)
class RadialSolution:
    """Tabulated u_{delta,eps} on a uniform radial grid."""

    n: int
    delta: float
    eps: float
    r: np.ndarray
    u: np.ndarray
    rtol: float = 1e-8


def tabulate_solution(n: int, delta: float, eps: float, num: int, rtol: float = 1e-8) -> RadialSolution:
    """Sample u_{delta,eps} on a uniform grid over (0, 1/e)."""
    r = np.linspace(0.0, BALL_RADIUS, num + 1)[1:]
    u = np.array([u_delta_eps(n, delta, eps, float(ri), rtol=rtol) for ri in r])
    return RadialSolution(n, delta, eps, r, u, rtol)


def radial_residual(sol: RadialSolution, r_grid: np.ndarray) -> float:
    """Max |L u - chi_(0,eps)| by centered finite differences on tabulated u.

    r_grid must avoid 2h-neighborhoods of 0, eps and 1/e (h = table spacing).
    """
    r, u = sol.r, sol.u
    h = r[1] - r[0]
    r_grid = np.asarray(r_grid, dtype=float)
    bad = (r_grid < 2 * h) | (np.abs(r_grid - sol.eps) < 2 * h) | (r_grid > BALL_RADIUS - 2 * h)
    if np.any(bad):
        raise ValueError("r_grid must avoid 2h-neighborhoods of 0, eps and 1/e")
    idx = np.rint((r_grid - r[0]) / h).astype(int)
    idx = np.clip(idx, 1, r.size - 2)
    rg = r[idx]
    d1 = (u[idx + 1] - u[idx - 1]) / (2 * h)
    d2 = (u[idx + 1] - 2 * u[idx] + u[idx - 1]) / (h * h)
    lu = -d2 - (sol.n - 1) / rg * d1 - sol.delta / (rg * np.log(rg)) * d1
    chi = (rg < sol.eps).astype(float)
    return float(np.max(np.abs(lu - chi)))


@dataclass(frozen=True)
class BlowupFit:
    slope: float
    intercept: float
    r_squared: float
    eps: np.ndarray
    ratios: np.ndarray
    quality_ok: bool


def blowup_rate(
    n: int,
    delta: float,
    annulus: tuple[float, float],
    eps_sequence,
    samples: int = 16,
    r2_gate: float = 0.98,
) -> BlowupFit:
    """Fit the growth exponent of m(eps) = min_annulus u_{delta,eps} / eps^n.

    Least squares of ln m(eps) against ln(-ln eps); the slope estimates delta.
    u is radial and monotone, so the minimum sits at the outer annulus radius;
    the 16-point sampling documents this rather than assuming it.
    """
    e2, e3 = annulus
    eps_sequence = np.asarray(list(eps_sequence), dtype=float)
    if eps_sequence.size < 3:
        raise ValueError("need at least 3 epsilons for a fit")
    if not (0.0 < e2 < e3 < BALL_RADIUS) or np.any(eps_sequence >= e2):
        raise ValueError("require 0 < eps < e2 < e3 < 1/e for all eps")
    rr = np.linspace(e2, e3, samples)
    ratios = np.empty_like(eps_sequence)
    for i, eps in enumerate(eps_sequence):
        uu = np.array([u_delta_eps(n, delta, float(eps), float(r)) for r in rr])
        ratios[i] = uu.min() / eps**n
    x = np.log(-np.log(eps_sequence))
    y = np.log(ratios)
    slope, intercept = np.polyfit(x, y, 1)
    yhat = slope * x + intercept
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    # a near-zero slope (delta = 0 regime) carries no trend for R^2 to certify
    quality_ok = bool(r2 >= r2_gate or abs(slope) <= 0.05)
    return BlowupFit(float(slope), float(intercept), float(r2), eps_sequence, ratios, quality_ok)
