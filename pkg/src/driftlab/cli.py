"""Thin command-line client for the experiment service.

By default the requests run against the FastAPI app in-process (no server
needed); --server points the same client at a remote instance.  Output is
a JSON report plus one CSV per table, all numerics with 17 significant
digits.  Exit codes: 0 all verdicts pass, 2 a verdict failed, 1 config or
validation error.
"""

import argparse
import json
import os
import sys
from pathlib import Path


def _load_config(path):
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a mapping")
    return data


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_artifacts(result: dict, out_dir: str):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(result["report"], fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, table in result.get("tables", {}).items():
        with open(out / f"{name}.csv", "w") as fh:
            fh.write(",".join(table["header"]) + "\n")
            for row in table["rows"]:
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _parse_pole(text, default_center):
    if text == "center":
        return list(default_center)
    return [float(v) for v in text.split(",")]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", help="base URL of a running service (default: in-process)")
    common.add_argument("--config", help="YAML config file; flags override its keys")
    common.add_argument("--out", help="directory for report.json and CSV tables")

    p = argparse.ArgumentParser(prog="driftlab", description=__doc__)
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=argparse.ArgumentParser)

    def add_parser(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    lz = add_parser("lorentz", help="Lorentz seminorms of samples or radial profiles")
    lz.add_argument("--p", type=float)
    lz.add_argument("--q", type=float)
    lz.add_argument("--radial", help="radial profile name")
    lz.add_argument("--delta", type=float)
    lz.add_argument("--expect-divergence", action="store_true")

    add_parser("rearrange", help="decreasing rearrangement of weighted samples")

    ce = add_parser("counterexample", help="blow-up rate of the drift counterexample")
    ce.add_argument("--delta", type=float)
    ce.add_argument("--k-min", type=int)
    ce.add_argument("--k-max", type=int)

    sv = add_parser("solve", help="one Dirichlet solve")
    sv.add_argument("--preset", help="operator preset")
    sv.add_argument("--grid", type=int, help="grid resolution (h = 1/grid)")
    sv.add_argument("--tol", type=float)

    gr = add_parser("green", help="approximate Green column and bound constants")
    gr.add_argument("--preset", help="operator preset")
    gr.add_argument("--grid", type=int, help="grid resolution (h = 1/grid)")
    gr.add_argument("--pole", help="'center' or comma-separated coordinates")
    gr.add_argument("--m", type=int)
    gr.add_argument("--side", choices=["forward", "adjoint"])
    gr.add_argument("--tol", type=float)

    pr = add_parser("principles", help="ladder experiments for a priori bounds")
    pr.add_argument("--experiment",
                    choices=["global-bound", "max-principle", "moser", "sup-by-integral"])
    pr.add_argument("--preset", help="operator preset")

    st = add_parser("suite", help="run the acceptance battery")
    st.add_argument("--criteria", help="comma-separated criterion numbers (default all)")
    return p


def _build_body(args, cfg):
    body = dict(cfg)
    sc = args.subcommand
    if sc == "lorentz":
        if args.p is not None:
            body["p"] = args.p
        if args.q is not None:
            body["q"] = args.q
        if args.radial:
            radial = dict(body.get("radial", {}))
            radial["profile"] = args.radial
            if args.delta is not None:
                radial["delta"] = args.delta
            body["radial"] = radial
        if args.expect_divergence:
            body["expect_divergence"] = True
    elif sc == "counterexample":
        if args.delta is not None:
            body["delta"] = args.delta
        if args.k_min is not None or args.k_max is not None:
            lo, hi = body.get("k_range", [3, 8])
            body["k_range"] = [args.k_min if args.k_min is not None else lo,
                               args.k_max if args.k_max is not None else hi]
    elif sc in ("solve", "green"):
        if args.grid is not None:
            dom = dict(body.get("domain",
                                {"kind": "box", "lo": [-1.0] * 3, "hi": [1.0] * 3}))
            dom["h"] = 1.0 / args.grid
            body["domain"] = dom
        if args.preset:
            op = dict(body.get("operator", {}))
            op["preset"] = args.preset
            body["operator"] = op
        if args.tol is not None:
            body["tol"] = args.tol
        if sc == "green":
            if args.m is not None:
                body["m"] = args.m
            if args.side:
                body["side"] = args.side
            if args.pole is not None:
                dom = body.get("domain", {})
                if dom.get("kind") == "ball":
                    center = dom.get("center", [0.0] * 3)
                else:
                    lo, hi = dom.get("lo", [-1.0] * 3), dom.get("hi", [1.0] * 3)
                    center = [(a + b) / 2.0 for a, b in zip(lo, hi)]
                body["pole"] = _parse_pole(args.pole, center)
    elif sc == "principles":
        if args.experiment:
            body["experiment"] = args.experiment
        if args.preset:
            op = dict(body.get("operator", {}))
            op["preset"] = args.preset
            body["operator"] = op
    elif sc == "suite":
        if args.criteria:
            body["criteria"] = [int(v) for v in args.criteria.split(",")]
    return body


def main(argv=None):
    args = build_parser().parse_args(argv)
    threads = os.environ.get("DRIFTLAB_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    try:
        cfg = _load_config(args.config) if args.config else {}
        body = _build_body(args, cfg)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    import httpx

    if args.server:
        with httpx.Client(base_url=args.server, timeout=3600.0) as client:
            resp = client.post(f"/{args.subcommand}", json=body)
    else:
        # ASGITransport is async-only; drive the in-process call with asyncio
        import asyncio

        from .service import app

        async def _post():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(
                transport=transport, base_url="http://driftlab.local", timeout=3600.0
            ) as client:
                return await client.post(f"/{args.subcommand}", json=body)

        resp = asyncio.run(_post())
    if resp.status_code in (400, 422):
        detail = resp.json().get("detail", resp.text)
        if isinstance(detail, list):
            for item in detail:
                print(f"validation error: {item}", file=sys.stderr)
        else:
            print(f"validation error: {detail}", file=sys.stderr)
        return 1
    resp.raise_for_status()
    result = resp.json()
    if args.out:
        _write_artifacts(result, args.out)
    print(json.dumps(result["report"], indent=2, sort_keys=True))
    return 0 if result["ok"] else 2


if __name__ == "__main__":
    sys.exit(main())
