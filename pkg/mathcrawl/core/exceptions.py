"""
mathcrawl — Exception Classes
One hierarchy shared by the CLI (exit codes) and the debugging API (HTTP status).
"""


class MathCrawlError(Exception):
    """Base exception for mathcrawl"""
    status_code: int = 500
    exit_code: int = 1

    def __init__(self, error: str, message: str, detail: dict | None = None):
        self.error = error
        self.message = message
        self.detail = detail or {}
        super().__init__(message)

    def to_dict(self) -> dict:
        return {"error": self.error, "message": self.message, "detail": self.detail}


class UsageError(MathCrawlError):
    """exit 1 / 400 — Bad flag, missing argument, bad request body"""
    status_code = 400
    exit_code = 1

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__("UsageError", message, detail)


class ConfigError(MathCrawlError):
    """exit 2 / 422 — Unreadable or invalid pipeline config"""
    status_code = 422
    exit_code = 2

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__("ConfigError", message, detail)


class ModelLoadError(MathCrawlError):
    """exit 2 / 503 — Model file missing or unreadable"""
    status_code = 503
    exit_code = 2

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__("ModelLoadError", message, detail)


class ModelFormatError(ModelLoadError):
    """exit 2 / 503 — Bad magic, version or dimensions in a model file"""

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__(message, detail)
        self.error = "ModelFormatError"


class ShardOpenError(MathCrawlError):
    """exit 3 / 404 — Shard file missing or unreadable"""
    status_code = 404
    exit_code = 3

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__("ShardOpenError", message, detail)


class OutputError(MathCrawlError):
    """exit 3 / 500 — Output directory not writable"""
    status_code = 500
    exit_code = 3

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__("OutputError", message, detail)


class DegenerateLabelSetError(MathCrawlError):
    """exit 2 / 422 — Training data with fewer than two classes"""
    status_code = 422
    exit_code = 2

    def __init__(self, message: str = "degenerate label set", detail: dict | None = None):
        super().__init__("DegenerateLabelSetError", message, detail)


class EmptyDocumentError(MathCrawlError):
    """exit 1 / 422 — Text with no scoreable tokens"""
    status_code = 422
    exit_code = 1

    def __init__(self, message: str = "empty document", detail: dict | None = None):
        super().__init__("EmptyDocumentError", message, detail)
