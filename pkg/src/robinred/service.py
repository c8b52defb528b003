"""HTTP service exposing the solver pipeline.

Each endpoint accepts the INI configuration text and returns the same
JSON report the pipeline produces.  Configuration errors map to 400 with
a structured detail (message, line, key); pipeline verdict failures stay
200 with ok=false and the failing stage, so clients can distinguish
"your request is malformed" from "the problem data fails a hypothesis".
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .config import parse_config
from .errors import ConfigError, SolveStageError
from .pipeline import (read_solution_csv, run_audit, run_spectrum, run_verify,
                       solution_csv, solve_problem)
from .reporting import plain


class ConfigRequest(BaseModel):
    config: str = Field(description="INI configuration text")
    base_dir: str = Field(default=".", description="directory for relative paths")


class VerifyRequest(ConfigRequest):
    solution_csv: str = Field(description="solution CSV (index,...,u)")


class StageFailure(BaseModel):
    stage: str
    message: str
    payload: dict = Field(default_factory=dict)


class SpectrumResponse(BaseModel):
    ok: bool
    config: dict
    table_csv: str
    distinct_eigenvalues: list[float]
    multiplicities: list[int]
    certificates: dict


class AuditResponse(BaseModel):
    ok: bool
    config: dict
    reaction: dict
    audit: dict
    table: str


class SolveResponse(BaseModel):
    ok: bool
    report: dict = Field(default_factory=dict)
    solutions_csv: list[str] = Field(default_factory=list)
    error: StageFailure | None = None


class VerifyResponse(BaseModel):
    ok: bool
    config: dict
    verification: dict


app = FastAPI(
    title="robinred",
    description="Variational solver for resonant semilinear Robin problems",
    version=__version__,
)


def _parse(req: ConfigRequest):
    try:
        return parse_config(req.config, base_dir=req.base_dir)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail={
            "message": str(exc), "line": exc.line, "key": exc.key})


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/spectrum", response_model=SpectrumResponse)
def spectrum_endpoint(req: ConfigRequest):
    cfg = _parse(req)
    return SpectrumResponse(**plain(run_spectrum(cfg)))


@app.post("/check-f", response_model=AuditResponse)
def check_f_endpoint(req: ConfigRequest):
    cfg = _parse(req)
    return AuditResponse(**plain(run_audit(cfg)))


@app.post("/solve", response_model=SolveResponse)
def solve_endpoint(req: ConfigRequest):
    cfg = _parse(req)
    try:
        result = solve_problem(cfg)
    except SolveStageError as exc:
        return SolveResponse(ok=False, error=StageFailure(
            stage=exc.stage, message=str(exc), payload=plain(exc.payload)))
    csvs = [solution_csv(result.mesh, r.u) for r in result.records]
    return SolveResponse(ok=True, report=plain(result.report),
                         solutions_csv=csvs)


@app.post("/verify", response_model=VerifyResponse)
def verify_endpoint(req: VerifyRequest):
    cfg = _parse(req)
    try:
        u = read_solution_csv(req.solution_csv)
        out = run_verify(cfg, u)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail={
            "message": str(exc), "line": None, "key": None})
    return VerifyResponse(**plain(out))
