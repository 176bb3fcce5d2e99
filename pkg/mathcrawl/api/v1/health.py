"""
mathcrawl — Health Check Endpoint
GET /api/v1/health — Service status, version, loaded resources and uptime.
"""

import time

from fastapi import APIRouter

from mathcrawl import __version__
from mathcrawl.api.v1.extract import get_scorer
from mathcrawl.core.wordlists import get_default_wordlists

router = APIRouter()

# Track startup time
_start_time = time.time()


@router.get("/health")
def health_check():
    """
    Returns: status (ok/degraded), version, wordlist sizes, whether the
    prefilter classifier tier is available, uptime.
    """
    try:
        lists = get_default_wordlists()
        wordlists = {
            "keywords": len(lists.keywords.terms),
            "commands": len(lists.commands),
            "boilerplate": len(lists.boilerplate),
            "blocklist": len(lists.blocklist),
        }
        status = "ok"
    except Exception as e:
        wordlists = {"error": type(e).__name__}
        status = "degraded"

    try:
        classifier_tier = get_scorer() is not None
    except Exception as e:
        classifier_tier = False
        status = "degraded"
        wordlists["mathscore_error"] = type(e).__name__

    return {
        "status": status,
        "version": __version__,
        "wordlists": wordlists,
        "classifier_tier": classifier_tier,
        "uptime_seconds": round(time.time() - _start_time, 1),
    }
