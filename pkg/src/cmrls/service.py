"""HTTP service wrapping the identification toolkit.

Batch endpoints mirror the CLI verbs (gen-profile / simulate / identify /
compare); artifacts are written to server-local paths named in the request,
and the JSON payloads stay small. Streaming sessions expose the online use
case: create a session per cell, post (t, V, I) samples as they arrive, and
read back the latest parameter estimates and condition number.
"""

from __future__ import annotations

import itertools
import threading
from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import config as cfgmod
from . import harness, recovery
from .ecm import InvalidConfigError, InvalidParamsError, simulate
from .estimators import (CmrlsConfig, EstimatorState, InitConfig,
                         NumericalBreakdownError, Snapshot, cmrls_step,
                         rls_init, rls_step)
from .regression import NonMonotoneTimeError, SampleWindow


class GenProfileRequest(BaseModel):
    config: dict[str, Any]
    out_path: str
    seed: int | None = None


class GenProfileResponse(BaseModel):
    rows: int
    path: str


class SimulateRequest(BaseModel):
    config: dict[str, Any]
    profile_path: str
    out_path: str


class SimulateResponse(BaseModel):
    rows: int
    path: str
    soc_min: float
    soc_max: float
    soc_outside_soft_bounds: bool


class IdentifyRequest(BaseModel):
    config: dict[str, Any]
    trace_path: str
    algo: str = "cmrls"
    out_dir: str


class CompareRequest(BaseModel):
    config: dict[str, Any]
    out_dir: str


class SessionCreateRequest(BaseModel):
    algo: str = "cmrls"
    est_dt_s: float = 10.0
    lambda_for: float = 0.999
    p0_scale: float = 1e3
    theta0: list[float] | None = Field(default=None, min_length=4, max_length=4)
    c_rem: float = 1e4
    c_upper: float = 1e8
    lambda_rem: float = 1.05


class SessionCreateResponse(BaseModel):
    session_id: str
    algo: str


class SampleRequest(BaseModel):
    time_s: float
    voltage_v: float
    current_a: float


class SampleResponse(BaseModel):
    step: int
    emitted: bool
    event: str | None = None
    kappa: float | None = None
    theta: list[float] | None = None
    estimate: dict[str, float | None] | None = None


class SessionStatus(BaseModel):
    session_id: str
    algo: str
    steps: int
    kappa: float
    theta: list[float]
    has_memory: bool
    memory_kappa: float | None


class _Session:
    def __init__(self, req: SessionCreateRequest):
        if req.algo not in ("rls", "cmrls"):
            raise InvalidConfigError(f"unknown algorithm {req.algo!r}")
        self.algo = req.algo
        self.est_dt = req.est_dt_s
        self.lambda_for = req.lambda_for
        self.cmrls = CmrlsConfig(
            c_rem=req.c_rem, c_upper=req.c_upper,
            lambda_for=req.lambda_for, lambda_rem=req.lambda_rem).validate()
        self.window = SampleWindow(req.est_dt_s)
        theta0 = tuple(req.theta0) if req.theta0 is not None else None
        self.state: EstimatorState = rls_init(
            InitConfig(p0_scale=req.p0_scale, theta0=theta0))
        self.memory: Snapshot | None = None
        self.lock = threading.Lock()

    def push(self, t: float, v: float, i: float) -> SampleResponse:
        with self.lock:
            sample = self.window.push(v, i, t)
            if sample is None:
                return SampleResponse(step=self.state.step, emitted=False)
            if self.algo == "rls":
                self.state = rls_step(self.state, sample, self.lambda_for)
                event = "normal"
            else:
                self.state, self.memory, ev = cmrls_step(
                    self.state, self.memory, sample, self.cmrls)
                event = ev.token
            est = recovery.params_from_theta(self.state.theta, self.est_dt)
            est_vals = {
                name: (est.value(name) if est.valid.get(name, False) else None)
                for name in recovery.FIELDS
            }
            return SampleResponse(
                step=self.state.step,
                emitted=True,
                event=event,
                kappa=self.state.kappa,
                theta=[float(x) for x in self.state.theta],
                estimate=est_vals,
            )


def create_app() -> FastAPI:
    app = FastAPI(title="cmrls", version="0.1.0",
                  description="Li-ion ECM parameter identification service")
    sessions: dict[str, _Session] = {}
    counter = itertools.count(1)

    def parse_config(doc: dict) -> cfgmod.ExperimentConfig:
        try:
            return cfgmod.load_dict(doc)
        except (InvalidConfigError, InvalidParamsError) as err:
            raise HTTPException(status_code=422, detail=str(err)) from err

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/v1/gen-profile", response_model=GenProfileResponse)
    def gen_profile(req: GenProfileRequest) -> GenProfileResponse:
        cfg = parse_config(req.config)
        if req.seed is not None:
            doc = dict(req.config)
            doc["seed"] = req.seed
            cfg = parse_config(doc)
        profile, _ = harness.profile_from_config(cfg)
        rows = harness.write_profile_csv(req.out_path, profile, echo=cfgmod.echo_dict(cfg))
        return GenProfileResponse(rows=rows, path=req.out_path)

    @app.post("/v1/simulate", response_model=SimulateResponse)
    def simulate_cmd(req: SimulateRequest) -> SimulateResponse:
        cfg = parse_config(req.config)
        try:
            profile = harness.read_profile_csv(req.profile_path)
        except FileNotFoundError as err:
            raise HTTPException(status_code=404, detail=str(err)) from err
        except harness.InputDataError as err:
            raise HTTPException(status_code=422, detail=str(err)) from err
        trace = simulate(cfg.ecm, profile, cfg.initial)
        if cfg.ocv_table is not None:
            voltage = harness.apply_ocv_table(trace.voltage, trace.soc, cfg.ecm, cfg.ocv_table)
            trace = type(trace)(time=trace.time, current=trace.current,
                                voltage=voltage, soc=trace.soc, v1=trace.v1)
        rows = harness.write_trace_csv(req.out_path, trace)
        soc_min = float(trace.soc.min())
        soc_max = float(trace.soc.max())
        return SimulateResponse(
            rows=rows, path=req.out_path, soc_min=soc_min, soc_max=soc_max,
            soc_outside_soft_bounds=bool(
                soc_min < harness.SOC_WARN_LOW or soc_max > harness.SOC_WARN_HIGH),
        )

    @app.post("/v1/identify")
    def identify_cmd(req: IdentifyRequest) -> dict:
        cfg = parse_config(req.config)
        if req.algo not in ("rls", "cmrls"):
            raise HTTPException(status_code=422, detail=f"unknown algorithm {req.algo!r}")
        try:
            return harness.identify_csv(cfg, req.trace_path, req.algo, req.out_dir)
        except FileNotFoundError as err:
            raise HTTPException(status_code=404, detail=str(err)) from err
        except harness.InputDataError as err:
            raise HTTPException(status_code=422, detail=str(err)) from err
        except NumericalBreakdownError as err:
            raise HTTPException(status_code=409, detail={
                "error": "numerical_breakdown",
                "step_index": err.step_index,
                "message": str(err)}) from err

    @app.post("/v1/compare")
    def compare_cmd(req: CompareRequest) -> dict:
        cfg = parse_config(req.config)
        try:
            result = harness.run_compare(cfg)
        except NumericalBreakdownError as err:
            raise HTTPException(status_code=409, detail={
                "error": "numerical_breakdown",
                "step_index": err.step_index,
                "message": str(err)}) from err
        return harness.write_compare_outputs(result, req.out_dir)

    @app.post("/v1/sessions", response_model=SessionCreateResponse)
    def create_session(req: SessionCreateRequest) -> SessionCreateResponse:
        try:
            session = _Session(req)
        except InvalidConfigError as err:
            raise HTTPException(status_code=422, detail=str(err)) from err
        sid = f"s{next(counter)}"
        sessions[sid] = session
        return SessionCreateResponse(session_id=sid, algo=session.algo)

    def get_session(sid: str) -> _Session:
        if sid not in sessions:
            raise HTTPException(status_code=404, detail=f"no session {sid}")
        return sessions[sid]

    @app.post("/v1/sessions/{sid}/samples", response_model=SampleResponse)
    def push_sample(sid: str, req: SampleRequest) -> SampleResponse:
        session = get_session(sid)
        try:
            return session.push(req.time_s, req.voltage_v, req.current_a)
        except NonMonotoneTimeError as err:
            raise HTTPException(status_code=422, detail=str(err)) from err
        except NumericalBreakdownError as err:
            raise HTTPException(status_code=409, detail={
                "error": "numerical_breakdown",
                "step_index": err.step_index,
                "message": str(err)}) from err

    @app.get("/v1/sessions/{sid}", response_model=SessionStatus)
    def session_status(sid: str) -> SessionStatus:
        session = get_session(sid)
        return SessionStatus(
            session_id=sid,
            algo=session.algo,
            steps=session.state.step,
            kappa=session.state.kappa,
            theta=[float(x) for x in session.state.theta],
            has_memory=session.memory is not None,
            memory_kappa=session.memory.kappa if session.memory is not None else None,
        )

    @app.delete("/v1/sessions/{sid}")
    def delete_session(sid: str) -> dict:
        get_session(sid)
        del sessions[sid]
        return {"deleted": sid}

    return app


app = create_app()
