"""
mathcrawl — API v1 Router Registration
Registers: extract, prefilter, health
"""

from fastapi import APIRouter

from mathcrawl.api.v1 import extract, health

router = APIRouter()

# Extraction + prefilter: /api/v1/extract, /api/v1/prefilter
router.include_router(extract.router, tags=["extract"])

# Health: /api/v1/health
router.include_router(health.router, tags=["health"])
