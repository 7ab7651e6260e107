"""Boundedness and maximum-principle experiments across refinement ladders.

Each experiment solves a family of drift-diffusion Dirichlet problems on a
ladder of grid spacings and reports the empirical constant of an a priori
bound (sup of the solution divided by the data norms that are supposed to
control it).  Verdicts classify the constant's behaviour across rungs:
a genuine estimate shows a stable constant, a failing one a growing one.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import mesh
from .lorentz import LorentzIndex, lorentz_norm
from .mesh import Domain, GridField, GridVectorField
from .elliptic import (
    OperatorData,
    adjoint,
    check_divergence_condition,
    field_samples,
    solve_dirichlet,
    vector_samples,
)

STABLE_RATIO = 1.5


@dataclass
class ExperimentSpec:
    """A ladder experiment: coefficients as closures, sampled per rung.

    make_domain maps a grid spacing h to a Domain; coefficient and data
    closures take node coordinate arrays of shape (..., n).  ball, when
    given, is (center, radius) for the local estimates.
    """

    make_domain: object
    ladder: list
    A: np.ndarray | None = None
    b_fn: object = None
    c_fn: object = None
    d_fn: object = None
    f_fn: object = None
    g_fn: object = None
    ball: tuple | None = None
    ellipticity: float = 1.0
    tol: float = 1e-10

    def operator(self, h: float):
        """Sample the operator on the rung-h grid, enforcing the Peclet gate."""
        dom = self.make_domain(h)
        A = self.A if self.A is not None else np.eye(dom.n)
        b = mesh.sample_vector(self.b_fn, dom) if self.b_fn else None
        c = mesh.sample_vector(self.c_fn, dom) if self.c_fn else None
        drift = np.zeros(dom.dims + (dom.n,))
        if b is not None:
            drift = drift + b.values
        if c is not None:
            drift = drift - c.values
        peclet = h * float(np.max(np.linalg.norm(drift, axis=-1)))
        if peclet > self.ellipticity:
            raise ValueError(
                f"Peclet gate failed at h={h}: h*max|b-c| = {peclet:.3g} "
                f"exceeds the ellipticity constant {self.ellipticity:.3g}"
            )
        d = mesh.sample_scalar(self.d_fn, dom) if self.d_fn else None
        op = OperatorData(dom, A, b=b, c=c, d=d, ellipticity=self.ellipticity)
        return dom, op

    def data(self, dom: Domain):
        f = mesh.sample_vector(self.f_fn, dom) if self.f_fn else None
        g = mesh.sample_scalar(self.g_fn, dom) if self.g_fn else None
        return f, g


@dataclass
class ConstantTrace:
    """Per-rung empirical constants with a stability verdict."""

    constants: list
    verdict: str = field(init=False)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = [v for v in self.constants if math.isfinite(v)]
        if len(vals) != len(self.constants) or not vals:
            self.verdict = "inconclusive"
            return
        lo, hi = min(vals), max(vals)
        if lo <= 0.0:
            self.verdict = "inconclusive" if hi <= 0.0 else "growing"
            return
        if hi / lo <= STABLE_RATIO:
            self.verdict = "stable"
        elif all(b > a for a, b in zip(vals, vals[1:])):
            self.verdict = "growing"
        else:
            self.verdict = "inconclusive"


def _data_norms(dom: Domain, f, g, region_fractions=None) -> float:
    """||f||_{n,1} + ||g||_{n/2,1} on the sampled data."""
    n = dom.n
    total = 0.0
    if f is not None:
        total += lorentz_norm(vector_samples(f, region_fractions), LorentzIndex(n, 1.0))
    if g is not None:
        total += lorentz_norm(field_samples(g, region_fractions), LorentzIndex(n / 2.0, 1.0))
    return total


def _sup_active(u: GridField) -> float:
    return float(np.max(u.values[u.domain.active_nodes]))


def global_bound_constant(spec: ExperimentSpec) -> ConstantTrace:
    """Per rung: ||u||_inf over the data norms for the zero-boundary solve."""
    constants = []
    diag = {"margins": [], "sup": [], "norms": []}
    for h in spec.ladder:
        dom, op = spec.operator(h)
        margin = max(
            check_divergence_condition(op.b, op.d, dom),
            check_divergence_condition(op.c, op.d, dom),
        )
        if margin < 0.0:
            raise ValueError(f"divergence condition fails at h={h} (margin {margin:.3g})")
        f, g = spec.data(dom)
        norms = _data_norms(dom, f, g)
        if norms == 0.0:
            raise ValueError("zero data: the bound constant is 0/0")
        rep = solve_dirichlet(op, rhs_f=f, rhs_g=g, tol=spec.tol)
        sup = float(np.max(np.abs(rep.field.values[dom.active_nodes])))
        constants.append(sup / norms)
        diag["margins"].append(margin)
        diag["sup"].append(sup)
        diag["norms"].append(norms)
    return ConstantTrace(constants, diagnostics=diag)


def inhomogeneous_max_principle(spec: ExperimentSpec, beta) -> ConstantTrace:
    """sup u over (boundary sup+ plus data norms), adjoint-side condition.

    beta is a closure for the Dirichlet boundary data.
    """
    constants = []
    diag = {"margins": [], "sup": []}
    for h in spec.ladder:
        dom, op = spec.operator(h)
        margin = check_divergence_condition(op.c, op.d, dom)
        if margin < 0.0:
            raise ValueError(f"divergence condition on (c, d) fails at h={h}")
        f, g = spec.data(dom)
        bc = mesh.sample_scalar(beta, dom) if beta else GridField.zeros(dom)
        sup_beta = max(0.0, float(np.max(bc.values[dom.boundary], initial=0.0)))
        denom = sup_beta + _data_norms(dom, f, g)
        if denom == 0.0:
            raise ValueError("zero data and boundary values: constant is 0/0")
        rep = solve_dirichlet(op, rhs_f=f, rhs_g=g, tol=spec.tol, boundary=bc)
        sup = _sup_active(rep.field)
        constants.append(sup / denom)
        diag["margins"].append(margin)
        diag["sup"].append(sup)
    return ConstantTrace(constants, diagnostics=diag)


def moser_constant(spec: ExperimentSpec) -> ConstantTrace:
    """Interior estimate: sup over the half ball by the ball average plus norms."""
    if spec.ball is None:
        raise ValueError("moser_constant needs spec.ball = (center, radius)")
    center, radius = np.asarray(spec.ball[0], dtype=float), float(spec.ball[1])
    constants = []
    diag = {"sup_half": [], "avg": []}
    for h in spec.ladder:
        dom, op = spec.operator(h)
        if not np.all(dom.indicator(center + radius * np.eye(dom.n))) or not np.all(
            dom.indicator(center - radius * np.eye(dom.n))
        ):
            raise ValueError("estimate ball must sit inside the domain")
        f, g = spec.data(dom)
        rep = solve_dirichlet(op, rhs_f=f, rhs_g=g, tol=spec.tol)
        u = rep.field
        coords = dom.node_coords()
        dist = np.linalg.norm(coords - center, axis=-1)
        half = dom.active_nodes & (dist <= radius / 2.0)
        sup_half = float(np.max(np.abs(u.values[half])))
        absu = GridField(dom, np.abs(u.values))
        avg = mesh.fint_ball(absu, center, radius)
        frac = mesh.ball_cell_fractions(dom, center, radius)
        denom = avg + _data_norms(dom, f, g, region_fractions=frac)
        if denom == 0.0:
            raise ValueError("zero solution and data on the ball")
        constants.append(sup_half / denom)
        diag["sup_half"].append(sup_half)
        diag["avg"].append(avg)
    return ConstantTrace(constants, diagnostics=diag)


def sup_by_integral(spec: ExperimentSpec, make_u=None) -> ConstantTrace:
    """sup over the half ball by the ball average, for nonnegative fields.

    make_u(dom, op) may supply the nonnegative subsolution per rung; the
    default is the zero-boundary solve of the experiment's data.
    """
    if spec.ball is None:
        raise ValueError("sup_by_integral needs spec.ball = (center, radius)")
    center, radius = np.asarray(spec.ball[0], dtype=float), float(spec.ball[1])
    constants = []
    for h in spec.ladder:
        dom, op = spec.operator(h)
        if make_u is not None:
            u = make_u(dom, op)
        else:
            f, g = spec.data(dom)
            u = solve_dirichlet(op, rhs_f=f, rhs_g=g, tol=spec.tol).field
        vals = u.values[dom.active_nodes]
        scale = float(np.max(np.abs(vals), initial=0.0))
        if scale == 0.0:
            raise ValueError("zero field")
        if float(vals.min()) < -1e-10 * scale:
            raise ValueError("field has a negative part; sup-by-average needs u >= 0")
        coords = dom.node_coords()
        dist = np.linalg.norm(coords - center, axis=-1)
        half = dom.active_nodes & (dist <= radius / 2.0)
        sup_half = float(np.max(u.values[half]))
        avg = mesh.fint_ball(u, center, radius)
        if avg <= 0.0:
            raise ValueError("zero ball average")
        constants.append(sup_half / avg)
    return ConstantTrace(constants)
