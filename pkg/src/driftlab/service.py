"""HTTP API over the experiment runner.

Request bodies are validated by pydantic models, numeric gates by the
runner itself; gate violations come back as 400 with the full list of
problems.  Every endpoint returns {ok, report, tables}.
"""

from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import runner

app = FastAPI(title="driftlab", version="0.1.0")


class DomainSpec(BaseModel):
    kind: Literal["box", "ball"]
    h: float
    lo: Optional[list[float]] = None
    hi: Optional[list[float]] = None
    center: Optional[list[float]] = None
    radius: Optional[float] = None


class OperatorSpec(BaseModel):
    preset: Literal["laplacian", "smooth-drift", "counterexample"] = "laplacian"
    delta: float = 1.0
    j: int = 16


class RadialSpec(BaseModel):
    profile: Literal[
        "counterexample-drift", "counterexample-divergence", "constant", "power"
    ]
    n: int = 3
    delta: float = 1.0
    value: float = 1.0
    exponent: float = -1.0


class LorentzRequest(BaseModel):
    p: float
    q: Optional[float] = None  # omitted means the weak (infinity) index
    samples: Optional[list[list[float]]] = None
    radial: Optional[RadialSpec] = None
    expect_divergence: bool = False


class RearrangeRequest(BaseModel):
    samples: list[list[float]]


class CounterexampleRequest(BaseModel):
    n: int = 3
    delta: float = 1.0
    k_range: list[int] = Field(default_factory=lambda: [3, 8])
    annulus: list[float] = Field(default_factory=lambda: [0.06, 0.3])


class SolveRequest(BaseModel):
    domain: DomainSpec
    operator: OperatorSpec = Field(default_factory=OperatorSpec)
    rhs_g: Optional[str] = "one"
    rhs_f: Optional[str] = None
    tol: float = 1e-10


class GreenRequest(BaseModel):
    domain: DomainSpec
    operator: OperatorSpec = Field(default_factory=OperatorSpec)
    pole: list[float]
    m: int = 8
    side: Literal["forward", "adjoint"] = "forward"
    tol: float = 1e-8
    pointwise_annulus: Optional[list[float]] = None
    energy_radii: list[float] = Field(default_factory=list)
    second_pole: Optional[list[float]] = None
    k: Optional[int] = None


class BallSpec(BaseModel):
    center: list[float]
    radius: float


class PrinciplesRequest(BaseModel):
    experiment: Literal["global-bound", "max-principle", "moser", "sup-by-integral"]
    domain: DomainSpec
    ladder: list[float]
    operator: OperatorSpec = Field(default_factory=OperatorSpec)
    rhs_g: Optional[str] = "one"
    rhs_f: Optional[str] = None
    boundary: Optional[str] = None
    ball: Optional[BallSpec] = None
    tol: float = 1e-10


class SuiteRequest(BaseModel):
    criteria: Optional[list[int]] = None


class RunResult(BaseModel):
    ok: bool
    report: dict
    tables: dict


def _execute(subcommand: str, cfg: dict) -> RunResult:
    try:
        out = runner.run(subcommand, cfg)
    except runner.ConfigError as exc:
        raise HTTPException(status_code=400, detail=exc.errors)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=[str(exc)])
    return RunResult(**out)


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/lorentz", response_model=RunResult)
def lorentz(req: LorentzRequest):
    cfg = req.model_dump(exclude_none=True)
    return _execute("lorentz", cfg)


@app.post("/rearrange", response_model=RunResult)
def rearrange(req: RearrangeRequest):
    return _execute("rearrange", req.model_dump())


@app.post("/counterexample", response_model=RunResult)
def counterexample(req: CounterexampleRequest):
    return _execute("counterexample", req.model_dump())


@app.post("/solve", response_model=RunResult)
def solve(req: SolveRequest):
    return _execute("solve", req.model_dump(exclude_none=True))


@app.post("/green", response_model=RunResult)
def green(req: GreenRequest):
    cfg = req.model_dump(exclude_none=True)
    if req.k is None:
        cfg.pop("k", None)
    return _execute("green", cfg)


@app.post("/principles", response_model=RunResult)
def principles(req: PrinciplesRequest):
    cfg = req.model_dump(exclude_none=True)
    if req.ball is not None:
        cfg["ball"] = {"center": req.ball.center, "radius": req.ball.radius}
    return _execute("principles", cfg)


@app.post("/suite", response_model=RunResult)
def suite(req: SuiteRequest):
    return _execute("suite", req.model_dump(exclude_none=True))
