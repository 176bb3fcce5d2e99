"""mathcrawl 0.4 — Math-aware web-archive extraction"""

__version__ = "0.4.0"
__title__ = "mathcrawl"
__description__ = "Extract, filter and deduplicate mathematical text from web-archive shards"
