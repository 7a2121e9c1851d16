"""
API route definitions.

HTTP endpoints for OSPA scoring and for submitting / reading Monte Carlo
experiments. No business logic; delegates to services.

Route prefix is configurable via API_PREFIX environment variable:
- Development: /api (routes at /api/health, etc.)
- Production: "" (routes at /health, etc.)

Experiments run as background tasks and write under RESULTS_DIR/<name>.
"""

import logging
from pathlib import Path

from fastapi import APIRouter, BackgroundTasks, HTTPException

from app.config.settings import settings
from app.models.schemas import ExperimentAccepted, ExperimentRequest, MospaRow, OspaParams
from app.models.schemas import OspaRequest, OspaResponse
from app.services import metrics_service, tracking_service
from app.utils import file_utils
from app.utils.env_utils import get_version

logger = logging.getLogger("tbdtrack.api")

# Create router with configurable prefix from environment
router = APIRouter(prefix=settings.normalized_api_prefix, tags=["api"])


def _experiment_dir(name: str) -> Path:
    return Path(settings.results_dir) / name


def _run_experiment_task(request: ExperimentRequest, output_dir: Path) -> None:
    """Background task body; failures are logged, the result file simply never appears."""
    try:
        tracking_service.run_experiment(request.config, settings.max_workers, output_dir)
    except Exception:
        logger.exception("[API] experiment %s failed", request.name)


@router.get("/health")
def health() -> dict[str, str]:
    """Liveness check. Returns API status and configuration info."""
    return {
        "status": "ok",
        "environment": settings.app_env,
        "version": get_version(),
        "api_prefix": settings.normalized_api_prefix or "(root)",
    }


@router.post("/ospa", response_model=OspaResponse)
def ospa(request: OspaRequest) -> OspaResponse:
    """OSPA between two position sets, with its localization and cardinality parts."""
    try:
        result = metrics_service.ospa_components(
            request.estimates, request.truth, OspaParams(c=request.c, p=request.p)
        )
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e)) from e
    return OspaResponse(
        ospa=result.ospa,
        localization=result.localization,
        cardinality=result.cardinality,
    )


@router.post("/experiments", response_model=ExperimentAccepted, status_code=202)
def submit_experiment(request: ExperimentRequest, background_tasks: BackgroundTasks) -> ExperimentAccepted:
    """
    Schedule a Monte Carlo experiment.

    The config is validated on submission; results appear under
    RESULTS_DIR/<name> once every run has finished.
    """
    output_dir = _experiment_dir(request.name)
    logger.info("[API] experiment %s accepted: %d runs of %s", request.name, request.config.n_runs,
                request.config.filter.value)
    background_tasks.add_task(_run_experiment_task, request, output_dir)
    return ExperimentAccepted(
        name=request.name,
        output_dir=str(output_dir),
        n_runs=request.config.n_runs,
        filter=request.config.filter,
    )


@router.get("/experiments/{name}", response_model=list[MospaRow])
def get_experiment(name: str) -> list[MospaRow]:
    """Aggregated MOSPA rows of a finished experiment."""
    if not name.replace("_", "").replace("-", "").isalnum():
        raise HTTPException(status_code=400, detail=f"Invalid experiment name: {name}")
    path = _experiment_dir(name) / "mospa.csv"
    if not path.exists():
        raise HTTPException(status_code=404, detail=f"No results for experiment '{name}'")
    try:
        return file_utils.read_mospa_csv(path)
    except RuntimeError as e:
        raise HTTPException(status_code=503, detail=str(e)) from e
