"""
FastAPI application entry point.

Wire up routers, middleware, and lifecycle hooks.
Optional HTTP surface over the tracker: OSPA scoring and background Monte
Carlo experiments. The CLI (app/cli.py) is the primary entry point.
"""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from app.config.settings import settings
from app.utils.env_utils import PACKAGE_VERSION
from app.utils.log_utils import configure_logging

logger = logging.getLogger("tbdtrack.api")


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Application lifespan handler.
    Manages startup and shutdown events.
    """
    configure_logging(settings.log_level)
    logger.info("=" * 50)
    logger.info("[API] Starting up...")
    logger.info("[API] Environment: %s", settings.app_env)
    logger.info("[API] API prefix: %s", settings.normalized_api_prefix or "(root)")
    logger.info("[API] Results dir: %s, workers: %d", settings.results_dir, settings.max_workers)
    logger.info("[API] Server: %s:%s", settings.app_host, settings.app_port)
    logger.info("=" * 50)
    yield
    logger.info("[API] Shutting down...")


app = FastAPI(
    title="TBD Tracker - Poisson/multi-Bernoulli track-before-detect experiments",
    description="Simulate intensity images, run T-TOMB/P or T-MB, score with OSPA.",
    version=PACKAGE_VERSION,
    lifespan=lifespan,
    docs_url="/docs" if not settings.is_production else None,
    redoc_url="/redoc" if not settings.is_production else None,
)


@app.middleware("http")
async def log_requests(request: Request, call_next):
    logger.info("[REQ] %s %s", request.method, request.url)
    response = await call_next(request)
    logger.info("[RES] %s", response.status_code)
    return response


# Global exception handler – 500 responses stay JSON
@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    logger.exception("Unhandled exception: %s", exc)
    return JSONResponse(
        status_code=500,
        content={"detail": "Internal server error"},
    )


@app.get("/", include_in_schema=False)
async def root():
    prefix = settings.normalized_api_prefix
    return JSONResponse(
        content={
            "service": "TBD Tracker API",
            "version": PACKAGE_VERSION,
            "status": "ok",
            "docs": "/docs" if not settings.is_production else None,
            "api_prefix": prefix or "(root)",
            "endpoints": {
                "health": f"{prefix}/health",
                "ospa": f"{prefix}/ospa",
                "experiments": f"{prefix}/experiments",
            },
        }
    )


from app.api.routes import router as api_router  # noqa: E402

app.include_router(api_router)


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "app.main:app",
        host=settings.app_host,
        port=settings.app_port,
        reload=not settings.is_production,
    )
