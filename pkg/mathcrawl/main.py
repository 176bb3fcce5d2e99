"""
mathcrawl — FastAPI Application
Debugging API: run extraction and the prefilter on a single page.
"""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from mathcrawl import __description__, __title__, __version__
from mathcrawl.api import v1
from mathcrawl.config import settings
from mathcrawl.core.exceptions import MathCrawlError
from mathcrawl.core.wordlists import get_default_wordlists

logging.basicConfig(
    level=settings.log_level,
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)


# ── Lifespan ───────────────────────────────────────────────────────────────────
@asynccontextmanager
async def lifespan(app: FastAPI):
    """Startup and shutdown events"""
    logger.info(f"STARTUP mathcrawl {__version__} starting...")

    # Bundled lists fail loudly here rather than on the first request
    lists = get_default_wordlists()
    logger.info(
        f"STARTUP wordlists loaded terms={len(lists.keywords.terms)} commands={len(lists.commands)}"
    )
    if settings.math_model:
        v1.extract.get_scorer()
        logger.info(f"STARTUP mathscore model loaded path={settings.math_model}")

    logger.info(f"STARTUP mathcrawl {__version__} ready!")
    yield
    logger.info("SHUTDOWN mathcrawl stopped")


# ── FastAPI App ────────────────────────────────────────────────────────────────
app = FastAPI(
    title=__title__,
    description=__description__,
    version=__version__,
    lifespan=lifespan,
)


# ── Exception Handlers ─────────────────────────────────────────────────────────
@app.exception_handler(MathCrawlError)
async def mathcrawl_error_handler(request: Request, exc: MathCrawlError):
    logger.warning(f"REQUEST_ERROR path={request.url.path} error={exc.error} message={exc.message!r}")
    return JSONResponse(status_code=exc.status_code, content=exc.to_dict())


# ── Routes ─────────────────────────────────────────────────────────────────────
app.include_router(v1.router, prefix="/api/v1")
