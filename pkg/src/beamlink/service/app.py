"""HTTP service exposing the Monte Carlo sweep.

A thin FastAPI wrapper: `POST /sweep` validates the request, runs the
sweep in-process, and returns the aggregated rows.  Invalid parameter
combinations come back as 422; a sweep in which every trial failed comes
back as 500 with the first failure in the detail string.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ConfigurationError
from ..montecarlo import MonteCarloError, run_sweep
from .models import SweepRequest, SweepResponse

__all__ = ["create_app"]


def create_app() -> FastAPI:
    app = FastAPI(title="beamlink", version=__version__)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(request: SweepRequest) -> SweepResponse:
        try:
            cfg = request.to_system_config()
        except ConfigurationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        try:
            result = run_sweep(cfg, workers=request.workers)
        except MonteCarloError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        return SweepResponse.from_result(result)

    return app
