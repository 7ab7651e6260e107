"""The acceptance battery: twelve self-contained numerical checks.

Each criterion function returns a dict with passed/detail/seconds; the
suite subcommand and the acceptance tests both run these.  All randomness
is seeded, so repeated runs are bitwise identical.
"""

import math
import time

import numpy as np

from . import green as green_mod
from . import mesh
from .lorentz import (
    LorentzIndex,
    DivergentNorm,
    WeightedSamples,
    decreasing_rearrangement,
    lorentz_norm,
    lorentz_norm_radial,
    unit_ball_volume,
)
from .radial import (
    BALL_RADIUS,
    blowup_rate,
    counterexample_drift,
    radial_residual,
    tabulate_solution,
)
from .mesh import Domain, GridField
from .elliptic import (
    OperatorData,
    adjoint,
    assemble,
    check_divergence_condition,
    solve_dirichlet,
)
from .principles import ExperimentSpec, global_bound_constant, moser_constant
from .runner import _smooth_b, _smooth_d, clamped_drift


def _timed(fn):
    def wrapper():
        t0 = time.time()
        passed, detail = fn()
        return {"criterion": int(fn.__name__.split("_")[-1]), "passed": bool(passed),
                "detail": detail, "seconds": round(time.time() - t0, 2)}
    wrapper.__name__ = fn.__name__
    return wrapper


# -- 1: rearrangement against the inf-definition scan ------------------------

def _oracle_rearrangement(values, weights, probes):
    """inf{t >= 0 : mu(t) <= s} by a direct scan over candidate thresholds.

    Computes the distribution function independently (per-threshold masked
    sums, no sorting of the sample pairs) and takes the infimum per probe.
    """
    cands = np.concatenate(([0.0], np.unique(values)))
    mu = np.array([weights[values > t].sum() for t in cands])  # decreasing
    out = np.empty_like(probes)
    for i, s in enumerate(probes):
        hit = np.flatnonzero(mu <= s)
        out[i] = cands[hit[0]] if hit.size else cands[-1]
    return out


@_timed
def criterion_1():
    rng = np.random.default_rng(20240817)
    for trial in range(1000):
        k = int(rng.integers(1, 257))
        values = np.round(rng.exponential(1.0, k), 3)  # ties on purpose
        weights = rng.uniform(0.1, 2.0, k)
        ws = WeightedSamples(values, weights)
        star = decreasing_rearrangement(ws)
        total = ws.total_measure
        probes = rng.uniform(0.0, 1.1 * total, 100)
        got = star(probes)
        want = _oracle_rearrangement(values, weights, probes)
        if not np.array_equal(got, want):
            return False, f"trial {trial}: rearrangement disagrees with the inf-scan"
        # equimeasurability at every sample threshold
        for t in np.unique(values):
            mu = float(weights[values > t].sum())
            if not math.isclose(star.measure_above(t), mu, rel_tol=1e-12, abs_tol=1e-12):
                return False, f"trial {trial}: equimeasurability fails at t={t}"
    return True, "1000 random samples, 100 probes each, exact agreement"


# -- 2: Lorentz golden values -------------------------------------------------

@_timed
def criterion_2():
    rng = np.random.default_rng(7)
    worst_char = 0.0
    for _ in range(20):
        p = float(rng.uniform(1.0, 6.0))
        q = float(rng.uniform(0.8, 5.0))
        measure = float(rng.uniform(0.01, 50.0))
        ws = WeightedSamples(np.array([1.0]), np.array([measure]))
        got = lorentz_norm(ws, LorentzIndex(p, q))
        want = (p / q) ** (1.0 / q) * measure ** (1.0 / p)
        worst_char = max(worst_char, abs(got - want) / want)
    if worst_char > 1e-12:
        return False, f"indicator norm off by {worst_char:.2e}"
    worst_agree = 0.0
    worst_power = 0.0
    for _ in range(50):
        k = int(rng.integers(1, 60))
        ws = WeightedSamples(rng.uniform(0.0, 5.0, k), rng.uniform(0.05, 1.0, k))
        p = float(rng.uniform(1.0, 5.0))
        q = float(rng.uniform(0.9, 4.0))
        a = lorentz_norm(ws, LorentzIndex(p, q), formula="rearrangement")
        b = lorentz_norm(ws, LorentzIndex(p, q), formula="distribution")
        if a > 0:
            worst_agree = max(worst_agree, abs(a - b) / a)
        # |u|^r norm identity
        r = float(rng.uniform(1.2, 3.0))
        wr = WeightedSamples(ws.values**r, ws.weights)
        lhs = lorentz_norm(wr, LorentzIndex(p, q))
        rhs = lorentz_norm(ws, LorentzIndex(p * r, q * r)) ** r
        if rhs > 0:
            worst_power = max(worst_power, abs(lhs - rhs) / rhs)
    if worst_agree > 1e-10:
        return False, f"norm formulas disagree by {worst_agree:.2e}"
    if worst_power > 1e-10:
        return False, f"power identity off by {worst_power:.2e}"
    return True, (f"indicators {worst_char:.1e}, formulas {worst_agree:.1e}, "
                  f"powers {worst_power:.1e}")


# -- 3: drift norm dichotomy ---------------------------------------------------

@_timed
def criterion_3():
    n = 3
    prof = counterexample_drift(n, 1.0)
    vals = {}
    for q in (1.25, 2.0, 4.0):
        vals[q] = lorentz_norm_radial(prof, LorentzIndex(float(n), q), n, BALL_RADIUS)
        if not math.isfinite(vals[q]):
            return False, f"norm at q={q} not finite"
    golden = math.sqrt(3.0) * (4.0 * math.pi / 3.0) ** (1.0 / 3.0)
    if abs(vals[2.0] - golden) > 1e-4:
        return False, f"q=2 norm {vals[2.0]:.8f} vs {golden:.8f}"
    try:
        lorentz_norm_radial(prof, LorentzIndex(float(n), 1.0), n, BALL_RADIUS)
        return False, "q=1 norm did not diverge"
    except DivergentNorm:
        pass
    return True, f"q=2 matches {golden:.6f} to {abs(vals[2.0]-golden):.1e}; q=1 divergent"


# -- 4: manufactured convergence ------------------------------------------------

def _manufactured_errors(with_drift: bool):
    def exact(X):
        return np.prod(np.sin(np.pi * X), axis=-1)

    def rhs(X):
        u = exact(X)
        out = 3.0 * math.pi**2 * u
        if with_drift:
            x, y, z = X[..., 0], X[..., 1], X[..., 2]
            gx = math.pi * np.cos(math.pi * x) * np.sin(math.pi * y) * np.sin(math.pi * z)
            gy = math.pi * np.sin(math.pi * x) * np.cos(math.pi * y) * np.sin(math.pi * z)
            gz = math.pi * np.sin(math.pi * x) * np.sin(math.pi * y) * np.cos(math.pi * z)
            b = (np.sin(3 * x), y**2, np.cos(z))
            divb = 3 * np.cos(3 * x) + 2 * y - np.sin(z)
            out = out - divb * u - (b[0] * gx + b[1] * gy + b[2] * gz)
        return out

    errs = []
    for m in (8, 16, 32):
        dom = Domain.box((0.0,) * 3, (1.0,) * 3, 1.0 / m)
        b = None
        if with_drift:
            b = mesh.sample_vector(
                lambda X: np.stack([np.sin(3 * X[..., 0]), X[..., 1] ** 2,
                                    np.cos(X[..., 2])], axis=-1), dom)
        op = OperatorData(dom, np.eye(3), b=b)
        g = mesh.sample_scalar(rhs, dom)
        rep = solve_dirichlet(op, rhs_g=g, tol=1e-11)
        diff = GridField(dom, rep.field.values - exact(dom.node_coords()))
        err = math.sqrt(np.sum(mesh.cell_means(diff) ** 2) * dom.h**3)
        errs.append(err)
    return errs


@_timed
def criterion_4():
    details = []
    for with_drift in (False, True):
        errs = _manufactured_errors(with_drift)
        ratios = [errs[i] / errs[i + 1] for i in range(2)]
        details.append(f"{'drift' if with_drift else 'laplacian'} ratios "
                       + ", ".join(f"{r:.3f}" for r in ratios))
        if not all(3.4 <= r <= 4.6 for r in ratios):
            return False, "; ".join(details)
    return True, "; ".join(details)


# -- 5: discrete Green duality ----------------------------------------------

@_timed
def criterion_5():
    rng = np.random.default_rng(42)
    dom = Domain.box((0.0,) * 3, (1.0,) * 3, 1.0 / 16)  # 17^3 nodes
    worst = 0.0
    for trial in range(5):
        S = rng.standard_normal((3, 3))
        A = np.eye(3) + 0.15 * (S + S.T) / 2.0 + 0.3 * (S - S.T) / 2.0
        kb = rng.integers(1, 4, 3)
        kc = rng.integers(1, 4, 3)
        b = mesh.sample_vector(
            lambda X: np.stack([np.sin(kb[0] * X[..., 0]), np.cos(kb[1] * X[..., 1]),
                                X[..., 2] * kb[2]], axis=-1), dom)
        c = mesh.sample_vector(
            lambda X: np.stack([X[..., 1] * kc[0], np.sin(kc[1] * X[..., 2]),
                                np.cos(kc[2] * X[..., 0])], axis=-1), dom)
        d = mesh.sample_scalar(lambda X: 1.0 + 0.5 * np.sin(X.sum(axis=-1)), dom)
        op = OperatorData(dom, A, b=b, c=c, d=d, ellipticity=0.4)
        x, y = (0.3, 0.5, 0.5), (0.7, 0.5, 0.5)
        defect = green_mod.symmetry_defect(op, x, y, 7, 7, tol=1e-8)
        colf = green_mod.approximate_green(op, y, 7, tol=1e-8)
        scale = float(np.max(np.abs(colf.field.values)))
        rel = defect / scale
        worst = max(worst, rel)
        if rel > 1e-6:
            return False, f"trial {trial}: defect/scale = {rel:.2e}"
    return True, f"5 operators, worst defect/scale {worst:.2e}"


# -- 6: Laplacian pointwise constant ------------------------------------------

@_timed
def criterion_6():
    h = 1.0 / 24
    dom = Domain.box((-2.0,) * 3, (2.0,) * 3, h)
    op = OperatorData(dom, np.eye(3))
    col = green_mod.approximate_green(op, (0.0,) * 3, 8, tol=1e-8)
    pc = green_mod.pointwise_constant(col, r_min=4 * h, r_max=0.25)
    target = 1.0 / (4.0 * math.pi)
    dev = abs(pc / target - 1.0)
    return dev <= 0.15, f"constant {pc:.5f} vs 1/(4pi)={target:.5f}, deviation {dev:.1%}"


# -- 7: scale invariance ----------------------------------------------------

@_timed
def criterion_7():
    dom = Domain.box((-1.0,) * 3, (1.0,) * 3, 1.0 / 16)
    op = OperatorData(dom, np.eye(3), b=mesh.sample_vector(_smooth_b, dom),
                      d=mesh.sample_scalar(_smooth_d, dom))
    pole = np.array([0.1, 0.0, -0.1])
    col = green_mod.approximate_green(op, pole, 6, tol=1e-9)
    w0, g0 = green_mod.weak_norm_report(col)
    worst = 0.0
    for s in (0.5, 2.0):
        ops = green_mod.scaled_problem(op, s)
        cols = green_mod.approximate_green(ops, pole * s, round(6 / s), tol=1e-9)
        ws, gs = green_mod.weak_norm_report(cols)
        worst = max(worst, abs(ws / w0 - 1.0), abs(gs / g0 - 1.0))
    return worst <= 0.01, f"worst relative change {worst:.2e} over s in {{1/2, 2}}"


# -- 8: counterexample blow-up rate -------------------------------------------

@_timed
def criterion_8():
    eps = [math.exp(-k) for k in range(3, 9)]
    details = []
    ok = True
    for delta in (0.0, 1.0, 2.0):
        fit = blowup_rate(3, delta, (0.06, 0.3), eps)
        details.append(f"delta={delta}: slope {fit.slope:.3f}, R2 {fit.r_squared:.4f}")
        if delta == 0.0:
            ok &= abs(fit.slope) <= 0.05
        else:
            ok &= abs(fit.slope - delta) <= 0.1 * max(1.0, delta) and fit.r_squared >= 0.98
    return ok, "; ".join(details)


# -- 9: radial residual decay ---------------------------------------------

@_timed
def criterion_9():
    eps = math.exp(-2.0)
    num0 = 160
    h0 = BALL_RADIUS / num0
    base = np.linspace(6 * h0, BALL_RADIUS - 3 * h0, 40)
    r_grid = base[np.abs(base - eps) > 3 * h0]
    details = []
    ok = True
    for delta in (0.0, 1.0):
        res = []
        for num in (num0, 2 * num0, 4 * num0):
            sol = tabulate_solution(3, delta, eps, num, rtol=1e-10)
            res.append(radial_residual(sol, r_grid))
        if delta == 0.0:
            # centered differences annihilate the exact a/r + b branches, so
            # the residual is rounding noise at every h, below any rate
            sub_noise = all(r < 1e-7 for r in res)
            ok &= sub_noise
            details.append("delta=0: residuals " + ", ".join(f"{r:.1e}" for r in res)
                           + " (exact cancellation)")
        else:
            rates = [math.log2(res[i] / res[i + 1]) for i in range(2)]
            ok &= all(abs(r - 2.0) <= 0.3 for r in rates)
            details.append("delta=1: rates " + ", ".join(f"{r:.3f}" for r in rates))
    return ok, "; ".join(details)


# -- 10: maximum principle corpus ------------------------------------------

@_timed
def criterion_10():
    rng = np.random.default_rng(11)
    dom = Domain.box((0.0,) * 3, (1.0,) * 3, 1.0 / 12)
    worst = -np.inf
    for trial in range(20):
        amp = rng.uniform(0.2, 1.0, 3)
        k = rng.integers(1, 3, 3)

        def b_fn(X, amp=amp, k=k):
            return np.stack([amp[0] * np.sin(k[0] * X[..., 0]),
                             amp[1] * np.cos(k[1] * X[..., 1]),
                             amp[2] * X[..., 2] ** k[2]], axis=-1)

        dconst = float(2.0 + np.sum(amp * k))  # dominates |div b| on the unit box
        b = mesh.sample_vector(b_fn, dom)
        d = mesh.sample_scalar(lambda X, dc=dconst: dc + 0.0 * X[..., 0], dom)
        margin = check_divergence_condition(b, d, dom)
        if margin < 0.0:
            return False, f"trial {trial}: corpus margin negative ({margin:.2e})"
        cb = rng.uniform(-1.0, 1.0, 4)

        def beta_fn(X, cb=cb):
            return cb[0] + cb[1] * X[..., 0] + cb[2] * np.sin(2 * X[..., 1]) + cb[3] * X[..., 2] ** 2

        beta = mesh.sample_scalar(beta_fn, dom)
        op = OperatorData(dom, np.eye(3), b=b, d=d)
        rep = solve_dirichlet(op, tol=1e-10, boundary=beta,
                              rhs_g=mesh.sample_scalar(lambda X: 0.0 * X[..., 0], dom))
        interior_max = float(np.max(rep.field.values[dom.free]))
        bdry_plus = max(0.0, float(np.max(beta.values[dom.boundary])))
        scale = max(1.0, abs(bdry_plus))
        excess = (interior_max - bdry_plus) / scale
        worst = max(worst, excess)
        if excess > 1e-6:
            return False, f"trial {trial}: interior exceeds boundary by {excess:.2e}"
    return True, f"20 operators, worst normalized excess {worst:.2e}"


# -- 11: bound-constant stability and the torsion value -----------------------

@_timed
def criterion_11():
    torsion = ExperimentSpec(
        make_domain=lambda h: Domain.ball((0.0,) * 3, 1.0, h),
        ladder=[1 / 12, 1 / 16, 1 / 24],
        g_fn=lambda X: np.ones(X.shape[:-1]),
    )
    tr = global_bound_constant(torsion)
    target = 1.0 / (9.0 * (4.0 * math.pi / 3.0) ** (2.0 / 3.0))
    dev = abs(tr.constants[-1] / target - 1.0)
    if tr.verdict != "stable" or dev > 0.05:
        return False, f"torsion {tr.constants[-1]:.5f} vs {target:.5f} ({dev:.1%}), {tr.verdict}"
    drift = ExperimentSpec(
        make_domain=lambda h: Domain.box((-1.0,) * 3, (1.0,) * 3, h),
        ladder=[1 / 8, 1 / 12, 1 / 16],
        b_fn=_smooth_b,
        d_fn=_smooth_d,
        g_fn=lambda X: np.cos(X[..., 0]) * np.exp(-np.sum(X**2, axis=-1)),
        f_fn=lambda X: np.stack([X[..., 1], -X[..., 0], np.sin(X[..., 2])], axis=-1),
        ball=((0.0, 0.0, 0.0), 0.5),
    )
    tg = global_bound_constant(drift)
    tm = moser_constant(drift)
    ok = tg.verdict == "stable" and tm.verdict == "stable"
    return ok, (f"torsion dev {dev:.1%}; drift global {tg.verdict}, moser {tm.verdict}")


# -- 12: the integrability-threshold discriminator ---------------------------

@_timed
def criterion_12():
    a = 0.36
    rungs = [(8, 16, a / 20), (20, 40, a / 28), (54, 108, a / 40)]
    traces = {}
    for delta in (0.0, 1.0):
        consts = []
        for m, j, h in rungs:
            dom = Domain.box((-a,) * 3, (a,) * 3, h)
            b = mesh.sample_vector(clamped_drift(delta, j), dom)
            op = OperatorData(dom, np.eye(3), b=b)
            col = green_mod.approximate_green(op, (0.0,) * 3, m, side="adjoint", tol=1e-8)
            consts.append(green_mod.pointwise_constant(col, r_min=0.25, r_max=0.34))
        traces[delta] = consts
    flat = traces[0.0]
    spread = max(flat) / min(flat) - 1.0
    grow = traces[1.0]
    ratios = [grow[i + 1] / grow[i] for i in range(2)]
    ok = spread <= 0.10 and all(r >= 1.25 for r in ratios)
    return ok, (f"baseline spread {spread:.1%}; growth ratios "
                + ", ".join(f"{r:.3f}" for r in ratios))


CRITERIA = [
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
    criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12,
]


def run_battery(only=None):
    """Run the selected criteria (all by default); returns result dicts."""
    results = []
    for fn in CRITERIA:
        num = int(fn.__name__.split("_")[-1])
        if only and num not in only:
            continue
        results.append(fn())
    return results
