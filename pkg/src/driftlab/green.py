"""Approximate Green's functions and the empirical constants of their bounds.

A Green column is the discrete solution of L G = h_m with zero boundary
data, where h_m is the normalized indicator of a small ball around the
pole (a mollified point mass).  The routines here extract the quantities
whose boundedness (or blow-up) is under study: weak Lorentz norms of the
column and its gradient, the pointwise decay constant, annulus energies,
the forward/adjoint symmetry defect, and a level-set comparison check.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import mesh
from .lorentz import LorentzIndex, lorentz_norm, unit_ball_volume
from .mesh import Domain, GridField
from .elliptic import (
    OperatorData,
    SolveReport,
    adjoint,
    assemble,
    field_samples,
    gradient_samples,
    solve_system,
)


@dataclass
class GreenColumn:
    """One approximate Green's function column."""

    pole: np.ndarray
    radius: float  # mollification radius 1/m
    side: str  # "forward" | "adjoint"
    field: GridField
    report: SolveReport
    op: OperatorData

    @property
    def m(self) -> int:
        return int(round(1.0 / self.radius))


@dataclass
class BoundReport:
    """Empirical constants extracted from a Green column."""

    weak_state: float
    grad_weak: float
    pointwise_const: float
    annulus_consts: list
    symmetry_defect: float

    def __post_init__(self):
        entries = [self.weak_state, self.grad_weak, self.pointwise_const,
                   self.symmetry_defect, *self.annulus_consts]
        if not all(math.isfinite(v) and v >= 0.0 for v in entries):
            raise ValueError("bound report entries must be finite and non-negative")


def dirac_cellwise(domain: Domain, y, m: int) -> np.ndarray:
    """Cellwise values of the normalized ball indicator h_m at the pole.

    Cut-cell volume fractions are renormalized so the discrete integral
    is exactly one (up to rounding).
    """
    frac = mesh.ball_cell_fractions(domain, y, 1.0 / m)
    total = frac.sum() * domain.h**domain.n
    if total <= 0.0:
        raise ValueError("pole ball does not meet the active region")
    return frac / total


def _check_pole(domain: Domain, y: np.ndarray, m: int):
    if 1.0 / m < 2.0 * domain.h:
        raise ValueError("mollification radius 1/m must be at least 2h")
    # containment of B_{2/m}(y): sub-sample the ball and test the indicator
    r = 2.0 / m
    ticks = np.linspace(-r, r, 9)
    offs = np.stack(np.meshgrid(*([ticks] * domain.n), indexing="ij"), axis=-1)
    offs = offs.reshape(-1, domain.n)
    offs = offs[np.linalg.norm(offs, axis=-1) <= r]
    if not np.all(domain.indicator(y + offs)):
        raise ValueError("ball of radius 2/m around the pole leaves the domain")


def approximate_green(op: OperatorData, y, m: int, side: str = "forward",
                      tol: float = 1e-8) -> GreenColumn:
    """Solve for the approximate Green column with pole y and radius 1/m."""
    if side not in ("forward", "adjoint"):
        raise ValueError("side must be 'forward' or 'adjoint'")
    dom = op.domain
    y = np.asarray(y, dtype=float)
    _check_pole(dom, y, m)
    hm = dirac_cellwise(dom, y, m)
    solve_op = op if side == "forward" else adjoint(op)
    system = assemble(solve_op, rhs_cellwise=hm)
    report = solve_system(system, tol=tol)
    vals = report.field.values[dom.active_nodes]
    scale = float(np.max(np.abs(vals)))
    if scale > 0.0 and float(vals.min()) < -10.0 * tol * scale:
        raise ValueError("Green column violates nonnegativity beyond solver tolerance")
    return GreenColumn(y, 1.0 / m, side, report.field, report, op)


def weak_norm_report(col: GreenColumn):
    """Weak Lorentz constants (p, infinity) of the column and its gradient.

    Uses p = n/(n-2) for the field and p = n/(n-1) for the gradient
    magnitude, the decay classes of the fundamental solution.
    """
    n = col.field.domain.n
    weak = lorentz_norm(field_samples(col.field), LorentzIndex(n / (n - 2.0), None))
    grad = lorentz_norm(gradient_samples(col.field), LorentzIndex(n / (n - 1.0), None))
    return weak, grad


def pointwise_constant(col: GreenColumn, r_min: float | None = None,
                       r_max: float | None = None) -> float:
    """Max of G(x) |x - y|^(n-2) over nodes in the annulus around the pole.

    The inner exclusion radius defaults to twice the mollification radius;
    the outer one to half the bounding-box diameter.
    """
    dom = col.field.domain
    if r_min is None:
        r_min = 2.0 * col.radius
    if r_max is None:
        r_max = dom.diameter() / 2.0
    coords = dom.node_coords()
    dist = np.linalg.norm(coords - col.pole, axis=-1)
    sel = dom.active_nodes & (dist > r_min) & (dist < r_max)
    if not sel.any():
        raise ValueError("no nodes in the requested annulus")
    return float(np.max(col.field.values[sel] * dist[sel] ** (dom.n - 2)))


def symmetry_defect(op: OperatorData, x, y, m: int, k: int,
                    tol: float = 1e-8) -> float:
    """|ball-average duality defect| between forward and adjoint columns.

    The ball average of a nodal field against the mollified mass equals a
    load-vector inner product with the solution coefficients, so with
    exact-transpose assembly the two sides agree up to solver tolerance.
    """
    dom = op.domain
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_pole(dom, y, m)
    _check_pole(dom, x, k)
    if np.linalg.norm(x - y) <= 1.0 / m + 1.0 / k:
        raise ValueError("pole balls must be disjoint")
    hm = dirac_cellwise(dom, y, m)
    hk = dirac_cellwise(dom, x, k)
    fwd = assemble(op, rhs_cellwise=hm)
    adj = assemble(adjoint(op), rhs_cellwise=hk)
    G = solve_system(fwd, tol=tol)
    g = solve_system(adj, tol=tol)
    uf = G.field.values.reshape(-1)[fwd.free_flat]
    ua = g.field.values.reshape(-1)[adj.free_flat]
    # fint_{B_{1/k}(x)} G = F_k . u  and  fint_{B_{1/m}(y)} g = F_m . v
    return abs(float(adj.rhs @ uf) - float(fwd.rhs @ ua))


def annulus_energy(col: GreenColumn, r: float) -> float:
    """Normalized exterior gradient energy r^(n-2) int_{Omega \\ B_r} |grad G|^2."""
    if r < 4.0 * col.radius:
        raise ValueError("annulus radius must be at least 4/m")
    dom = col.field.domain
    grads = mesh.cell_gradients(col.field)
    outside = 1.0 - mesh.ball_cell_fractions(dom, col.pole, r)
    energy = float(np.sum(np.sum(grads * grads, axis=1) * outside)) * dom.h**dom.n
    return r ** (dom.n - 2) * energy


def represent_solution(columns, f: GridField) -> np.ndarray:
    """Quadrature representation u(y) = int G(x, y) f(x) dx per column pole.

    Forward columns yield values of the adjoint-equation solution with
    source f, one per pole, in column order.
    """
    fm = mesh.cell_means(f)
    hn = f.domain.h**f.domain.n
    out = np.empty(len(columns))
    for i, col in enumerate(columns):
        if col.field.domain is not f.domain and col.field.domain.dims != f.domain.dims:
            raise ValueError("columns and source must share the grid")
        out[i] = float(np.sum(mesh.cell_means(col.field) * fm)) * hn
    return out


def talenti_check(u: GridField, t_grid: np.ndarray | None = None):
    """Minimum slack of the level-set differential inequality for u.

    For each level t the product C_n mu(t)^(2/n-2) (-mu'(t)) (-dE/dt), with
    E(t) the gradient energy above level t, is at least one for smooth u
    (with equality for radial decreasing profiles); C_n = 1/(n^2 |B_1|^(2/n)).
    Level derivatives are centered differences on a logarithmic grid with
    plateau levels excluded.  Returns (min slack, number of valid levels).
    """
    dom = u.domain
    n = dom.n
    v = np.abs(mesh.cell_means(u))
    g2 = np.sum(mesh.cell_gradients(u) ** 2, axis=1)
    hn = dom.h**n
    top = float(v.max())
    if top <= 0.0:
        raise ValueError("field is identically zero")
    nlev = 64
    if t_grid is None:
        # equal-measure levels so each step is crossed by a comparable
        # number of cells; levels below ~5% of the max sit in the boundary
        # discretization layer and are skipped
        raw = np.quantile(v[v > 0.05 * top], np.linspace(0.02, 0.97, nlev))
        t_grid = np.unique(raw)
        if t_grid.size < 0.9 * nlev or t_grid[-1] >= top:
            # collapsed quantiles mean a large cell mass shares one value
            raise ValueError("field is plateau-dominated; level derivatives unusable")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.min() <= 0.0 or t_grid.max() >= top:
        raise ValueError("levels must lie strictly inside (0, max|u|)")
    mu = np.array([np.count_nonzero(v > t) for t in t_grid]) * hn
    en = np.array([g2[v > t].sum() for t in t_grid]) * hn
    win = max(1, min(8, t_grid.size // 8))
    idx = np.arange(win, t_grid.size - win)
    dt = t_grid[idx + win] - t_grid[idx - win]
    dmu = (mu[idx + win] - mu[idx - win]) / dt
    den = (en[idx + win] - en[idx - win]) / dt
    # plateau exclusion: repeated mu values make the derivative meaningless
    valid = (mu[idx + win] < mu[idx - win]) & (en[idx + win] < en[idx - win])
    if valid.sum() < 8:
        raise ValueError("field is plateau-dominated; level derivatives unusable")
    cn = 1.0 / (n**2 * unit_ball_volume(n) ** (2.0 / n))
    slack = cn * mu[idx][valid] ** (2.0 / n - 2.0) * (-dmu[valid]) * (-den[valid])
    return float(slack.min()), int(valid.sum())


def scaled_problem(op: OperatorData, s: float) -> OperatorData:
    """The operator transported to the domain rescaled by s about the origin.

    First-order coefficients scale by 1/s and the zero-order one by 1/s^2,
    so solutions transport by composition and the weak Lorentz constants
    of Green columns are invariant.
    """
    dom = op.domain
    new = Domain(dom.kind, dom.lo * s, dom.hi * s, dom.h * s,
                 params=_scaled_params(dom.params, s))
    A = op.A if op.A.shape == (dom.n, dom.n) else op.A.copy()
    b = c = d = None
    if op.b is not None:
        b = mesh.GridVectorField(new, op.b.values / s)
    if op.c is not None:
        c = mesh.GridVectorField(new, op.c.values / s)
    if op.d is not None:
        d = mesh.GridField(new, op.d.values / s**2)
    return OperatorData(new, A, b=b, c=c, d=d, ellipticity=op.ellipticity)


def _scaled_params(params: dict, s: float) -> dict:
    out = {}
    for key, val in params.items():
        if key in ("center",):
            out[key] = np.asarray(val, dtype=float) * s
        elif key in ("radius", "r_inner", "r_outer"):
            out[key] = float(val) * s
        else:
            out[key] = val
    return out
