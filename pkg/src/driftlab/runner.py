"""Config-driven experiment execution shared by the HTTP service and CLI.

Every run_* function takes a plain dict (already schema-checked by the
service layer), validates the numeric gates, executes deterministically,
and returns a JSON-ready report plus named CSV tables.  Gate violations
raise ConfigError carrying the full list of problems.
"""

import math

import numpy as np

from . import green as green_mod
from . import mesh
from . import principles as principles_mod
from .lorentz import (
    DivergentNorm,
    LorentzIndex,
    WeightedSamples,
    decreasing_rearrangement,
    distribution_function,
    lorentz_norm,
    lorentz_norm_radial,
)
from .radial import (
    BALL_RADIUS,
    RadialProfile,
    blowup_rate,
    counterexample_drift,
    counterexample_divergence,
)
from .mesh import Domain
from .elliptic import OperatorData, solve_dirichlet


class ConfigError(ValueError):
    """Invalid configuration; .errors lists every violated gate."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- presets -----------------------------------------------------------------

def _smooth_b(X):
    return np.stack([np.sin(2 * X[..., 0]), X[..., 1], np.cos(X[..., 2])], axis=-1)


def _smooth_d(X):
    return 4.0 + 0.0 * X[..., 0]


def clamped_drift(delta: float, j: int):
    """Outward radial drift of magnitude delta/(r(-ln r)), clamped below r = 1/j."""

    def fn(X):
        r = np.linalg.norm(X, axis=-1)
        rc = np.maximum(r, 1.0 / j)
        mag = delta / (rc * (-np.log(rc)))
        with np.errstate(invalid="ignore", divide="ignore"):
            out = X * (mag / np.maximum(r, 1e-300))[..., None]
        out[r == 0] = 0.0
        return out

    return fn


SCALAR_PRESETS = {
    "one": lambda X: np.ones(X.shape[:-1]),
    "gaussian": lambda X: np.exp(-4.0 * np.sum(X**2, axis=-1)),
    "sine": lambda X: np.prod(np.sin(np.pi * X), axis=-1),
    "linear": lambda X: 1.0 + X[..., 0],
}

VECTOR_PRESETS = {
    "swirl": lambda X: np.stack([X[..., 1], -X[..., 0], np.sin(X[..., 2])], axis=-1),
    "smooth": _smooth_b,
}


def build_domain(cfg: dict) -> Domain:
    errors = []
    kind = cfg.get("kind")
    h = cfg.get("h")
    if kind not in ("box", "ball"):
        errors.append(f"domain.kind must be box or ball, got {kind!r}")
    if not isinstance(h, (int, float)) or h <= 0:
        errors.append("domain.h must be a positive number")
    if errors:
        raise ConfigError(errors)
    try:
        if kind == "box":
            return Domain.box(cfg["lo"], cfg["hi"], float(h))
        return Domain.ball(cfg["center"], float(cfg["radius"]), float(h))
    except (KeyError, ValueError) as exc:
        raise ConfigError([f"domain: {exc}"]) from exc


def build_operator(cfg: dict, dom: Domain) -> OperatorData:
    preset = cfg.get("preset", "laplacian")
    if preset == "laplacian":
        return OperatorData(dom, np.eye(dom.n))
    if preset == "smooth-drift":
        b = mesh.sample_vector(_smooth_b, dom)
        d = mesh.sample_scalar(_smooth_d, dom)
        return OperatorData(dom, np.eye(dom.n), b=b, d=d)
    if preset == "counterexample":
        delta = float(cfg.get("delta", 1.0))
        j = int(cfg.get("j", 16))
        if delta < 0:
            raise ConfigError(["operator.delta must be nonnegative"])
        if 1.0 / j < 2.0 * dom.h:
            raise ConfigError([f"clamp scale 1/j = {1.0/j:.4g} is below 2h = {2*dom.h:.4g}"])
        c = mesh.sample_vector(clamped_drift(delta, j), dom)
        op = OperatorData(dom, np.eye(dom.n), c=c)
        peclet = dom.h * op.max_drift()
        if peclet > op.ellipticity:
            raise ConfigError([f"Peclet gate failed: h*max|drift| = {peclet:.3g}"])
        return op
    raise ConfigError([f"unknown operator preset {preset!r}"])


# -- subcommands -------------------------------------------------------------

def run_lorentz(cfg: dict) -> dict:
    p = cfg.get("p")
    q = cfg.get("q")  # None means infinity
    if not isinstance(p, (int, float)) or p <= 0:
        raise ConfigError(["p must be a positive number"])
    idx = LorentzIndex(float(p), None if q in (None, "inf") else float(q))
    if "samples" in cfg:
        pairs = np.asarray(cfg["samples"], dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
            raise ConfigError(["samples must be a nonempty list of [value, weight] pairs"])
        ws = WeightedSamples(pairs[:, 0], pairs[:, 1])
        by_rearr = lorentz_norm(ws, idx, formula="rearrangement")
        by_dist = lorentz_norm(ws, idx, formula="distribution")
        return {
            "ok": True,
            "report": {"norm": by_rearr, "norm_distribution_form": by_dist,
                       "agreement": abs(by_rearr - by_dist)},
            "tables": {},
        }
    if "radial" in cfg:
        rcfg = cfg["radial"]
        n = int(rcfg.get("n", 3))
        name = rcfg.get("profile")
        delta = float(rcfg.get("delta", 1.0))
        if name == "counterexample-drift":
            prof = counterexample_drift(n, delta)
        elif name == "counterexample-divergence":
            prof = counterexample_divergence(n)
        elif name == "constant":
            cval = float(rcfg.get("value", 1.0))
            prof = RadialProfile(lambda r: cval, BALL_RADIUS)
        elif name == "power":
            alpha = float(rcfg.get("exponent", -1.0))
            prof = RadialProfile(lambda r: r**alpha, BALL_RADIUS, singular_order="power")
        else:
            raise ConfigError([f"unknown radial profile {name!r}"])
        expected = bool(cfg.get("expect_divergence", False))
        try:
            val = lorentz_norm_radial(prof, idx, n, prof.R)
        except DivergentNorm:
            return {"ok": expected, "report": {"divergent": True, "expected": expected},
                    "tables": {}}
        return {"ok": not expected,
                "report": {"norm": val, "divergent": False, "expected": expected},
                "tables": {}}
    raise ConfigError(["lorentz config needs either 'samples' or 'radial'"])


def run_rearrange(cfg: dict) -> dict:
    pairs = np.asarray(cfg.get("samples", []), dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
        raise ConfigError(["samples must be a nonempty list of [value, weight] pairs"])
    ws = WeightedSamples(pairs[:, 0], pairs[:, 1])
    star = decreasing_rearrangement(ws)
    thresholds = np.unique(np.abs(pairs[:, 0]))
    rows = [[t, distribution_function(ws, t)] for t in thresholds]
    return {
        "ok": True,
        "report": {"breakpoints": list(star.breakpoints), "values": list(star.values)},
        "tables": {
            "rearrangement": {"header": ["breakpoint", "value"],
                              "rows": [[b, v] for b, v in zip(star.breakpoints, star.values)]},
            "distribution": {"header": ["threshold", "measure"], "rows": rows},
        },
    }


def run_counterexample(cfg: dict) -> dict:
    n = int(cfg.get("n", 3))
    delta = float(cfg.get("delta", 1.0))
    kmin, kmax = cfg.get("k_range", [3, 8])
    annulus = cfg.get("annulus", [0.06, 0.3])
    if not 0 < annulus[0] < annulus[1] < BALL_RADIUS:
        raise ConfigError([f"annulus must satisfy 0 < a < b < {BALL_RADIUS:.4f}"])
    eps = [math.exp(-k) for k in range(int(kmin), int(kmax) + 1)]
    if max(eps) >= annulus[0]:
        raise ConfigError(["largest eps must stay below the inner annulus radius"])
    fit = blowup_rate(n, delta, tuple(annulus), eps)
    return {
        "ok": bool(fit.quality_ok),
        "report": {"slope": fit.slope, "intercept": fit.intercept,
                   "r_squared": fit.r_squared, "quality_ok": bool(fit.quality_ok),
                   "delta": delta},
        "tables": {"blowup": {"header": ["eps", "ratio"],
                              "rows": [[e, r] for e, r in zip(fit.eps, fit.ratios)]}},
    }


def run_solve(cfg: dict) -> dict:
    dom = build_domain(cfg.get("domain", {}))
    op = build_operator(cfg.get("operator", {}), dom)
    tol = float(cfg.get("tol", 1e-10))
    gname = cfg.get("rhs_g", "one")
    fname = cfg.get("rhs_f")
    if gname is not None and gname not in SCALAR_PRESETS:
        raise ConfigError([f"unknown scalar preset {gname!r}"])
    if fname is not None and fname not in VECTOR_PRESETS:
        raise ConfigError([f"unknown vector preset {fname!r}"])
    g = mesh.sample_scalar(SCALAR_PRESETS[gname], dom) if gname else None
    f = mesh.sample_vector(VECTOR_PRESETS[fname], dom) if fname else None
    rep = solve_dirichlet(op, rhs_f=f, rhs_g=g, tol=tol)
    vals = rep.field.values[dom.active_nodes]
    coords = dom.node_coords().reshape(-1, dom.n)
    act = dom.active_nodes.reshape(-1)
    rows = [list(c) + [v] for c, v in zip(coords[act], rep.field.values.reshape(-1)[act])]
    return {
        "ok": not rep.stagnated,
        "report": {"iterations": rep.iterations, "residual": rep.residual,
                   "method": rep.method, "stagnated": rep.stagnated,
                   "sup": float(vals.max()), "inf": float(vals.min())},
        "tables": {"field": {"header": [f"x{d}" for d in range(dom.n)] + ["value"],
                             "rows": rows}},
    }


def run_green(cfg: dict) -> dict:
    dom = build_domain(cfg.get("domain", {}))
    op = build_operator(cfg.get("operator", {}), dom)
    tol = float(cfg.get("tol", 1e-8))
    pole = cfg.get("pole", [0.0] * dom.n)
    m = int(cfg.get("m", 8))
    side = cfg.get("side", "forward")
    col = green_mod.approximate_green(op, pole, m, side=side, tol=tol)
    weak, grad_weak = green_mod.weak_norm_report(col)
    ann_cfg = cfg.get("pointwise_annulus")
    if ann_cfg:
        pc = green_mod.pointwise_constant(col, r_min=ann_cfg[0], r_max=ann_cfg[1])
    else:
        pc = green_mod.pointwise_constant(col)
    energies = []
    for r in cfg.get("energy_radii", []):
        energies.append(green_mod.annulus_energy(col, float(r)))
    defect = 0.0
    if "second_pole" in cfg:
        defect = green_mod.symmetry_defect(op, cfg["second_pole"], pole, m,
                                           int(cfg.get("k", m)), tol=tol)
    report = green_mod.BoundReport(weak, grad_weak, pc, energies, defect)
    coords = dom.node_coords().reshape(-1, dom.n)
    act = dom.active_nodes.reshape(-1)
    rows = [list(c) + [v] for c, v in zip(coords[act], col.field.values.reshape(-1)[act])]
    return {
        "ok": not col.report.stagnated,
        "report": {"weak_state": report.weak_state, "grad_weak": report.grad_weak,
                   "pointwise_const": report.pointwise_const,
                   "annulus_consts": report.annulus_consts,
                   "symmetry_defect": report.symmetry_defect,
                   "solver": {"iterations": col.report.iterations,
                              "residual": col.report.residual,
                              "method": col.report.method}},
        "tables": {"column": {"header": [f"x{d}" for d in range(dom.n)] + ["value"],
                              "rows": rows}},
    }


def run_principles(cfg: dict) -> dict:
    experiment = cfg.get("experiment")
    ladder = cfg.get("ladder")
    if not ladder or not all(isinstance(h, (int, float)) and h > 0 for h in ladder):
        raise ConfigError(["ladder must be a nonempty list of positive spacings"])
    dom_cfg = dict(cfg.get("domain", {}))
    op_cfg = cfg.get("operator", {"preset": "laplacian"})
    preset = op_cfg.get("preset", "laplacian")

    def make_domain(h):
        c = dict(dom_cfg)
        c["h"] = h
        return build_domain(c)

    b_fn = d_fn = None
    if preset == "smooth-drift":
        b_fn, d_fn = _smooth_b, _smooth_d
    elif preset != "laplacian":
        raise ConfigError([f"principles supports laplacian and smooth-drift presets, got {preset!r}"])
    gname = cfg.get("rhs_g", "one")
    fname = cfg.get("rhs_f")
    spec = principles_mod.ExperimentSpec(
        make_domain=make_domain,
        ladder=[float(h) for h in ladder],
        b_fn=b_fn,
        d_fn=d_fn,
        g_fn=SCALAR_PRESETS[gname] if gname else None,
        f_fn=VECTOR_PRESETS[fname] if fname else None,
        ball=(cfg["ball"]["center"], cfg["ball"]["radius"]) if "ball" in cfg else None,
        tol=float(cfg.get("tol", 1e-10)),
    )
    if experiment == "global-bound":
        trace = principles_mod.global_bound_constant(spec)
    elif experiment == "max-principle":
        beta_name = cfg.get("boundary", "linear")
        if beta_name not in SCALAR_PRESETS:
            raise ConfigError([f"unknown boundary preset {beta_name!r}"])
        trace = principles_mod.inhomogeneous_max_principle(spec, SCALAR_PRESETS[beta_name])
    elif experiment == "moser":
        trace = principles_mod.moser_constant(spec)
    elif experiment == "sup-by-integral":
        trace = principles_mod.sup_by_integral(spec)
    else:
        raise ConfigError([f"unknown experiment {experiment!r}"])
    return {
        "ok": trace.verdict == "stable",
        "report": {"constants": list(trace.constants), "verdict": trace.verdict},
        "tables": {"constants": {"header": ["h", "constant"],
                                 "rows": [[h, c] for h, c in zip(spec.ladder, trace.constants)]}},
    }


def run_suite(cfg: dict) -> dict:
    from .battery import run_battery

    results = run_battery(only=cfg.get("criteria"))
    rows = [[r["criterion"], r["passed"], r["seconds"], r["detail"]] for r in results]
    return {
        "ok": all(r["passed"] for r in results),
        "report": {"results": results},
        "tables": {"suite": {"header": ["criterion", "passed", "seconds", "detail"],
                             "rows": rows}},
    }


RUNNERS = {
    "lorentz": run_lorentz,
    "rearrange": run_rearrange,
    "counterexample": run_counterexample,
    "solve": run_solve,
    "green": run_green,
    "principles": run_principles,
    "suite": run_suite,
}


def run(subcommand: str, cfg: dict) -> dict:
    if subcommand not in RUNNERS:
        raise ConfigError([f"unknown subcommand {subcommand!r}"])
    return RUNNERS[subcommand](cfg or {})
